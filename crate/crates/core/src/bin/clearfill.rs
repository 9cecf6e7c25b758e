fn main() -> std::process::ExitCode {
    clearfill::cli::main()
}
