"""Window-size ablation: final photometric loss and depth error for N = 1..4 on the oracle scene."""

import argparse

from patchplane.bundle import make_bundle
from patchplane.keypoints import gradient_map, select_keypoints
from patchplane.losses import LossConfig
from patchplane.metrics import depth_metrics
from patchplane.solver import SolverConfig, refine
from patchplane.superpixels import felzenszwalb_segment, large_regions
from patchplane.synth import default_scene, make_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iters", type=int, default=200)
    ap.add_argument("--scale", type=float, default=1.2)
    ap.add_argument("--sources", type=int, choices=(2, 4), default=2)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scene = make_scene(default_scene(seed=args.seed, n_sources=args.sources))
    kps = select_keypoints(gradient_map(scene.target), 3000, margin=5, seed=args.seed)
    regions = large_regions(felzenszwalb_segment(scene.target))
    print(f"{'N':>2}  {'L_ph':>9}  {'rel':>7}  {'delta1':>7}")
    for n in (1, 2, 3, 4):
        bundle = make_bundle(scene.target, scene.sources, scene.spec.k, kps, regions,
                             depth=args.scale * scene.gt_depth[0], poses=scene.gt_poses)
        final, state = refine(bundle, SolverConfig(iterations=args.iters, weights=LossConfig(window_n=n)))
        m = depth_metrics(final.depth(), scene.gt_depth[0])
        print(f"{n:>2}  {state.trace[-1].l_ph:9.2e}  {m.rel:7.4f}  {m.delta1:7.4f}")


if __name__ == "__main__":
    main()
