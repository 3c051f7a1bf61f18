"""Central finite-difference check of the analytic total-loss gradient."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bundle import FrameBundle
from .geometry import pose_compose, se3_exp
from .losses import LossConfig, evaluate

TOLERANCE = 1e-4


@dataclass
class GradcheckReport:
    entries: list = field(default_factory=list)  # dicts: kind, index, analytic, numeric, rel_error

    @property
    def max_rel_error(self) -> float:
        return float(max((e["rel_error"] for e in self.entries), default=0.0))

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_error < TOLERANCE)

    def to_json(self) -> dict:
        return {"max_rel_error": self.max_rel_error, "passed": self.passed, "entries": self.entries}


def rel_error(a: float, b: float, floor: float = 1e-12) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale < floor else float(abs(a - b) / scale)


def _nudge_depth(bundle: FrameBundle, idx, delta):
    grid = bundle.log_depth.copy()
    grid[idx] += delta
    return bundle.replace(log_depth=grid)


def _nudge_twist(bundle: FrameBundle, src, coord, delta):
    step = np.zeros(6)
    step[coord] = delta
    poses = list(bundle.poses)
    poses[src] = pose_compose(se3_exp(step), poses[src])
    return bundle.replace(poses=poses)


def gradcheck(
    bundle: FrameBundle,
    cfg: LossConfig = LossConfig(),
    samples: int = 50,
    seed: int = 1,
    h_depth: float = 1e-4,
    h_twist: float = 1e-5,
    pin_branch: bool = True,
) -> GradcheckReport:
    """Compare analytic gradients against central differences.

    ``samples`` random log-depth grid cells and every twist coordinate are
    probed. With ``pin_branch`` both probes are evaluated on the smooth piece
    of the objective that contains the base point (same bilinear cells,
    validity masks, residual signs and selected sources), so crossing a
    kink within the step cannot contaminate the difference quotient.
    """
    _, grads, branch = evaluate(bundle, cfg)
    pin = branch if pin_branch else None

    def loss(b):
        return evaluate(b, cfg, need_grad=False, branch=pin)[0].total

    report = GradcheckReport()
    rng = np.random.default_rng(seed)
    n_cells = bundle.log_depth.size
    for flat in rng.choice(n_cells, size=min(samples, n_cells), replace=False):
        idx = np.unravel_index(int(flat), bundle.log_depth.shape)
        num = (loss(_nudge_depth(bundle, idx, h_depth)) - loss(_nudge_depth(bundle, idx, -h_depth))) / (2 * h_depth)
        ana = float(grads.d_logdepth[idx])
        report.entries.append(
            {"kind": "log_depth", "index": [int(i) for i in idx], "analytic": ana, "numeric": float(num),
             "rel_error": rel_error(ana, num)}
        )
    for s in range(len(bundle.poses)):
        for c in range(6):
            num = (loss(_nudge_twist(bundle, s, c, h_twist)) - loss(_nudge_twist(bundle, s, c, -h_twist))) / (2 * h_twist)
            ana = float(grads.d_twist[s, c])
            report.entries.append(
                {"kind": "twist", "index": [s, c], "analytic": ana, "numeric": float(num), "rel_error": rel_error(ana, num)}
            )
    return report
