use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::Result;
use crate::raster::{check_dims, BoundaryMap, DepthImage, NormalMap, TransparencyMask};
use crate::synthgen::Primitive;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMetadata {
    pub scene_id: String,
    pub seed: u64,
    pub primitives: Vec<Primitive>,
    #[serde(default)]
    pub support_plane: Option<usize>,
}

/// One RGB-D frame: oracle ground truth (`gt_*`) next to the possibly corrupted or
/// perturbed pipeline inputs (`raw_depth`, `input_*`).
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub intrinsics: CameraIntrinsics,
    pub raw_depth: DepthImage,
    pub gt_depth: DepthImage,
    pub gt_normals: NormalMap,
    pub input_normals: NormalMap,
    pub gt_mask: TransparencyMask,
    pub input_mask: TransparencyMask,
    pub gt_boundary: BoundaryMap,
    pub input_boundary: BoundaryMap,
    pub metadata: SceneMetadata,
}

impl Scene {
    /// Scene whose pipeline inputs equal its ground truth.
    pub fn from_ground_truth(
        intrinsics: CameraIntrinsics,
        depth: DepthImage,
        normals: NormalMap,
        mask: TransparencyMask,
        boundary: BoundaryMap,
        metadata: SceneMetadata,
    ) -> Result<Self> {
        let scene = Self {
            intrinsics,
            raw_depth: depth.clone(),
            gt_depth: depth,
            gt_normals: normals.clone(),
            input_normals: normals,
            gt_mask: mask.clone(),
            input_mask: mask,
            gt_boundary: boundary.clone(),
            input_boundary: boundary,
            metadata,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn dims(&self) -> (usize, usize) {
        self.intrinsics.dims()
    }

    pub fn id(&self) -> &str {
        &self.metadata.scene_id
    }

    /// Checks that every raster matches the camera dimensions.
    pub fn validate(&self) -> Result<()> {
        let dims = self.dims();
        check_dims("raw_depth", dims, self.raw_depth.dims())?;
        check_dims("gt_depth", dims, self.gt_depth.dims())?;
        check_dims("gt_normals", dims, self.gt_normals.dims())?;
        check_dims("input_normals", dims, self.input_normals.dims())?;
        check_dims("gt_mask", dims, self.gt_mask.dims())?;
        check_dims("input_mask", dims, self.input_mask.dims())?;
        check_dims("gt_boundary", dims, self.gt_boundary.dims())?;
        check_dims("input_boundary", dims, self.input_boundary.dims())?;
        Ok(())
    }
}
