"""Compare the planar-loss gradient with and without differentiating through the plane fit."""

import numpy as np

from patchplane.gradcheck import gradcheck
from patchplane.losses import LossConfig
from patchplane.solver import prepare_bundle
from patchplane.synth import default_scene, make_scene


def main():
    scene = make_scene(default_scene())
    rng = np.random.default_rng(1)
    depth = scene.gt_depth[0] * np.exp(0.05 * rng.standard_normal(scene.gt_depth[0].shape))
    bundle = prepare_bundle(scene.target, scene.sources, scene.spec.k, depth=depth, poses=scene.gt_poses)
    for through in (True, False):
        rep = gradcheck(bundle, LossConfig(spp_through_fit=through), samples=50)
        print(f"through_fit={through!s:5}  max rel err {rep.max_rel_error:.2e}")


if __name__ == "__main__":
    main()
