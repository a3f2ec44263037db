"""In-context action generation: graph assembly plus reverse denoising.

A retrieved demonstration is warped onto the current observation to form a
reference action sequence; a pluggable gradient predictor then drives the
iterative denoising update from Gaussian noise toward executable actions.
The analytic reference predictor stands in for a learned model: it points
straight at the warped reference, so the loop's convergence is exact and
testable while the interface stays swappable.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np
from scipy.spatial.transform import Rotation

from .geometry import PointCloud, Pose
from .library import Demonstration

DEFAULT_HORIZON = 8
STEP_DIM = 7  # translation (3) + rotation vector (3) + gripper logit (1)
KABSCH_RESIDUAL_TOL = 1e-4  # rms; exact correspondences land near 1e-12


class PolicyError(Exception):
    """Warp or denoising contract violation."""


@dataclass(frozen=True)
class Observation:
    """Policy input: segmented cloud, current end-effector pose, gripper bit."""

    cloud: PointCloud
    ee_pose: Pose
    gripper: int


def _wrap_rotvec(rv: np.ndarray) -> np.ndarray:
    """Wrap a rotation vector to magnitude <= pi."""
    angle = float(np.linalg.norm(rv))
    if angle <= np.pi or angle < 1e-12:
        return rv
    wrapped = np.mod(angle, 2 * np.pi)
    if wrapped > np.pi:
        wrapped -= 2 * np.pi
    return rv * (wrapped / angle)


def canonicalize_vector(vec: np.ndarray) -> np.ndarray:
    """Re-canonicalize every per-step rotation vector inside a flat action vector."""
    out = np.array(vec, dtype=float)
    horizon = len(out) // STEP_DIM
    for i in range(horizon):
        sl = slice(i * STEP_DIM + 3, i * STEP_DIM + 6)
        out[sl] = _wrap_rotvec(out[sl])
    return out


@dataclass(frozen=True, eq=False)
class ActionSequence:
    """Horizon of future end-effector poses plus real-valued gripper logits."""

    poses: tuple[Pose, ...]
    gripper_logits: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "poses", tuple(self.poses))
        logits = np.asarray(self.gripper_logits, dtype=float).reshape(-1)
        if len(logits) != len(self.poses):
            raise PolicyError("poses/logits length mismatch")
        object.__setattr__(self, "gripper_logits", logits)
        self.gripper_logits.setflags(write=False)

    def __len__(self) -> int:
        return len(self.poses)

    def __eq__(self, other):
        if not isinstance(other, ActionSequence):
            return NotImplemented
        return (self.poses == other.poses
                and np.array_equal(self.gripper_logits, other.gripper_logits))

    def __hash__(self):
        return hash((self.poses, self.gripper_logits.tobytes()))

    def gripper_bits(self) -> np.ndarray:
        return (self.gripper_logits > 0).astype(int)

    def encode(self) -> np.ndarray:
        """Flat (7H,) vector: per step translation, rotation vector, logit."""
        parts = []
        for pose, logit in zip(self.poses, self.gripper_logits):
            parts.append(pose.translation)
            parts.append(pose.rotvec())
            parts.append([logit])
        return np.concatenate(parts)

    @staticmethod
    def decode(vec: np.ndarray, horizon: int | None = None) -> "ActionSequence":
        vec = np.asarray(vec, dtype=float).reshape(-1)
        if len(vec) % STEP_DIM:
            raise PolicyError(f"vector length {len(vec)} is not a multiple of 7")
        horizon = horizon or len(vec) // STEP_DIM
        poses = []
        logits = []
        for i in range(horizon):
            chunk = vec[i * STEP_DIM:(i + 1) * STEP_DIM]
            poses.append(Pose.from_rotvec(_wrap_rotvec(chunk[3:6]), chunk[:3]))
            logits.append(chunk[6])
        return ActionSequence(tuple(poses), np.array(logits))


@dataclass(frozen=True, eq=False)
class PolicyGraph:
    """Heterogeneous graph over demo context, current observation, and actions.

    Topology is fully determined by (context steps, horizon): a temporal chain
    over context nodes, dense context-observation cross edges, and
    observation-to-action conditioning edges.
    """

    context_features: np.ndarray      # (T, 10)
    observation_features: np.ndarray  # (10,)
    action_vector: np.ndarray         # (7H,)
    horizon: int

    def __post_init__(self):
        for name in ("context_features", "observation_features", "action_vector"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        if len(self.action_vector) != self.horizon * STEP_DIM:
            raise PolicyError("action vector does not match horizon")

    @property
    def node_count(self) -> int:
        return len(self.context_features) + 1 + self.horizon

    def edge_sets(self) -> dict[str, tuple[tuple[int, int], ...]]:
        t = len(self.context_features)
        obs = t
        temporal = tuple((i, i + 1) for i in range(t - 1))
        cross = tuple((i, obs) for i in range(t))
        conditioning = tuple((obs, obs + 1 + j) for j in range(self.horizon))
        return {"temporal": temporal, "cross": cross,
                "conditioning": conditioning}

    def with_actions(self, vec: np.ndarray) -> "PolicyGraph":
        return PolicyGraph(self.context_features, self.observation_features,
                           np.asarray(vec, dtype=float), self.horizon)

    def actions(self) -> ActionSequence:
        return ActionSequence.decode(self.action_vector, self.horizon)

    def __eq__(self, other):
        if not isinstance(other, PolicyGraph):
            return NotImplemented
        return (self.horizon == other.horizon
                and np.array_equal(self.context_features, other.context_features)
                and np.array_equal(self.observation_features,
                                   other.observation_features)
                and np.array_equal(self.action_vector, other.action_vector))

    def __hash__(self):
        return hash((self.context_features.tobytes(),
                     self.observation_features.tobytes(),
                     self.action_vector.tobytes(), self.horizon))


def _step_features(cloud: PointCloud, pose: Pose, gripper: float) -> np.ndarray:
    fg = cloud.foreground()
    if len(fg) == 0:
        raise PolicyError("cloud has no foreground points")
    centroid = fg.positions.mean(axis=0)
    return np.concatenate([centroid, pose.translation, pose.rotvec(), [gripper]])


def build_graph(demo: Demonstration, obs: Observation,
                actions: ActionSequence) -> PolicyGraph:
    """Assemble the policy graph; node count is len(demo) + 1 + horizon."""
    if not demo.steps:
        raise PolicyError("empty demonstration")
    context = np.stack([
        _step_features(s.cloud, s.ee_pose, float(s.gripper)) for s in demo.steps])
    obs_feat = _step_features(obs.cloud, obs.ee_pose, float(obs.gripper))
    return PolicyGraph(context, obs_feat, actions.encode(), len(actions))


def estimate_relative_transform(demo_cloud: PointCloud,
                                obs_cloud: PointCloud) -> Pose:
    """Rigid transform taking demo foreground points onto observed ones.

    When the two clouds have matching per-label point blocks (same objects
    sampled with the same fixed pattern), an exact correspondence-based fit is
    used. Otherwise — raw unsegmented input, or a demo of a merely congruent
    object — it falls back to a centroid shift with identity rotation, which
    is what makes unmasked distractor clouds genuinely corrupting.
    """
    demo_fg = demo_cloud.foreground()
    obs_fg = obs_cloud.foreground()
    if len(demo_fg) == 0 or len(obs_fg) == 0:
        raise PolicyError("registration needs foreground points on both sides")

    if len(demo_fg) == len(obs_fg):
        d_labels, d_counts = np.unique(demo_fg.labels, return_counts=True)
        o_labels, o_counts = np.unique(obs_fg.labels, return_counts=True)
        if len(d_counts) == len(o_counts) and np.array_equal(
                np.sort(d_counts), np.sort(o_counts)):
            src = demo_fg.positions
            dst = obs_fg.positions
            c_src = src.mean(axis=0)
            c_dst = dst.mean(axis=0)
            rot, _ = Rotation.align_vectors(dst - c_dst, src - c_src)
            fitted = rot.apply(src - c_src) + c_dst
            residual = float(np.sqrt(np.mean(np.sum((fitted - dst) ** 2, axis=1))))
            if residual < KABSCH_RESIDUAL_TOL:
                q = rot.as_quat()
                return Pose(c_dst - rot.apply(c_src),
                            np.array([q[3], q[0], q[1], q[2]]))

    shift = obs_fg.positions.mean(axis=0) - demo_fg.positions.mean(axis=0)
    return Pose.from_translation(shift)


def resample_trajectory(poses, grippers, horizon: int):
    """Arc-length resample to `horizon` steps, preserving gripper anchors.

    Anchored waypoints: first, last, every gripper transition, and the
    waypoint immediately before a transition (so approach segments stay
    axis-decomposed after resampling). Free samples are spread along the
    remaining arc length.
    """
    poses = list(poses)
    grippers = [int(g) for g in grippers]
    n = len(poses)
    if n < 2:
        raise PolicyError("trajectory needs at least 2 waypoints")

    anchors = {0, n - 1}
    for i in range(1, n):
        if grippers[i] != grippers[i - 1]:
            anchors.add(i)
            anchors.add(i - 1)
    anchors = sorted(anchors)
    if len(anchors) > horizon:
        raise PolicyError(
            f"trajectory has {len(anchors)} anchors, horizon {horizon} too small")

    seg = np.array([np.linalg.norm(poses[i + 1].translation - poses[i].translation)
                    for i in range(n - 1)])
    cum = np.concatenate([[0.0], np.cumsum(seg)])

    free = horizon - len(anchors)
    spans = list(zip(anchors[:-1], anchors[1:]))
    span_len = np.array([cum[b] - cum[a] for a, b in spans])
    total = span_len.sum()
    if total <= 0:
        alloc = np.zeros(len(spans), dtype=int)
        alloc[:free] = 1  # degenerate: all waypoints coincide
    else:
        exact = free * span_len / total
        alloc = np.floor(exact).astype(int)
        remainder = exact - alloc
        for i in np.argsort(-remainder)[: free - alloc.sum()]:
            alloc[i] += 1

    sample_arcs: list[tuple[float, int]] = []  # (arc position, gripper bit)
    for (a, b), k in zip(spans, alloc):
        sample_arcs.append((cum[a], grippers[a]))
        for j in range(1, k + 1):
            arc = cum[a] + (cum[b] - cum[a]) * j / (k + 1)
            sample_arcs.append((arc, grippers[a]))
    sample_arcs.append((cum[-1], grippers[-1]))

    out_poses = []
    out_bits = []
    for arc, bit in sample_arcs:
        idx = int(np.searchsorted(cum, arc, side="right") - 1)
        idx = min(idx, n - 2)
        if seg[idx] < 1e-12:
            pose = poses[idx]
        else:
            frac = (arc - cum[idx]) / seg[idx]
            t = (1 - frac) * poses[idx].translation + frac * poses[idx + 1].translation
            r0 = Rotation.from_rotvec(poses[idx].rotvec())
            r1 = Rotation.from_rotvec(poses[idx + 1].rotvec())
            r = (r0 * (r0.inv() * r1) ** frac)
            q = r.as_quat()
            pose = Pose(t, np.array([q[3], q[0], q[1], q[2]]))
        out_poses.append(pose)
        out_bits.append(bit)
    return out_poses, out_bits


def warp_reference(demo: Demonstration, obs: Observation,
                   horizon: int = DEFAULT_HORIZON,
                   target_label: int | None = None) -> ActionSequence:
    """Demo trajectory resampled to the horizon and re-anchored on the scene."""
    if target_label is not None:
        if target_label not in set(np.unique(obs.cloud.labels)):
            raise PolicyError(
                f"target label {target_label} absent from observed cloud "
                f"(mask or grounding fault)")
    t_rel = estimate_relative_transform(demo.steps[0].cloud, obs.cloud)
    poses, bits = resample_trajectory(
        [s.ee_pose for s in demo.steps], [s.gripper for s in demo.steps], horizon)
    warped = tuple(t_rel.compose(p) for p in poses)
    logits = np.where(np.asarray(bits) > 0, 1.0, -1.0)
    return ActionSequence(warped, logits)


class GradientPredictor(Protocol):
    def predict(self, graph: PolicyGraph, k: int) -> np.ndarray: ...


@dataclass(frozen=True)
class ReferencePredictor:
    """Analytic gradient field pointing from the current actions to a*."""

    reference: ActionSequence

    def predict(self, graph: PolicyGraph, k: int) -> np.ndarray:
        return graph.action_vector - self.reference.encode()


def reference_predictor(a_star: ActionSequence) -> ReferencePredictor:
    return ReferencePredictor(a_star)


@dataclass(frozen=True)
class DiffusionSchedule:
    """Per-step coefficients for the reverse denoising update, indexed k=1..K."""

    alphas: np.ndarray
    gammas: np.ndarray
    sigmas: np.ndarray

    def __post_init__(self):
        for name in ("alphas", "gammas", "sigmas"):
            arr = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            object.__setattr__(self, name, arr)
            arr.setflags(write=False)
        k = len(self.alphas)
        if not (len(self.gammas) == len(self.sigmas) == k) or k < 1:
            raise PolicyError("schedule arrays must share a positive length")
        if not np.all(np.isfinite(self.alphas)) or not np.all(
                np.isfinite(self.gammas)) or not np.all(np.isfinite(self.sigmas)):
            raise PolicyError("schedule coefficients must be finite")
        if np.any(self.gammas <= 0) or np.any(self.gammas > 1):
            raise PolicyError("gamma coefficients must lie in (0, 1]")
        if self.sigmas[0] != 0.0:
            raise PolicyError("final step noise (sigma_1) must be 0")

    @property
    def steps(self) -> int:
        return len(self.alphas)

    def coeffs(self, k: int) -> tuple[float, float, float]:
        if not 1 <= k <= self.steps:
            raise PolicyError(f"step {k} outside schedule 1..{self.steps}")
        return (float(self.alphas[k - 1]), float(self.gammas[k - 1]),
                float(self.sigmas[k - 1]))


def default_schedule(steps: int = 16, alpha: float = 1.0, gamma: float = 0.5,
                     sigma0: float = 0.01) -> DiffusionSchedule:
    """Geometric contraction with noise vanishing at the final step."""
    ks = np.arange(1, steps + 1)
    return DiffusionSchedule(
        alphas=np.full(steps, alpha),
        gammas=np.full(steps, gamma),
        sigmas=sigma0 * (ks - 1) / steps,
    )


def denoise_step(graph: PolicyGraph, k: int, schedule: DiffusionSchedule,
                 predictor: GradientPredictor,
                 rng: np.random.Generator) -> PolicyGraph:
    """One reverse update: scale, subtract the predicted gradient, add noise."""
    alpha, gamma, sigma = schedule.coeffs(k)
    eps = np.asarray(predictor.predict(graph, k), dtype=float)
    if eps.shape != graph.action_vector.shape or not np.all(np.isfinite(eps)):
        raise PolicyError("predictor returned a malformed gradient field")
    new_vec = alpha * (graph.action_vector - gamma * eps)
    if sigma > 0:
        new_vec = new_vec + rng.normal(0.0, sigma, size=new_vec.shape)
    return graph.with_actions(canonicalize_vector(new_vec))


@dataclass
class DenoiseTrace:
    """Per-step vectorized distance to the reference, for diagnostics."""

    rows: list[tuple[int, float]] = field(default_factory=list)

    def to_table(self) -> str:
        lines = ["k\tdistance_to_reference"]
        for k, dist in self.rows:
            lines.append(f"{k}\t{dist:.9e}")
        return "\n".join(lines) + "\n"


def generate_actions(demo: Demonstration, obs: Observation,
                     schedule: DiffusionSchedule,
                     predictor_factory, rng: np.random.Generator,
                     horizon: int = DEFAULT_HORIZON,
                     copy_gripper: bool = False):
    """Sample noise actions and run the full reverse denoising loop.

    predictor_factory(demo, obs, horizon) must return a GradientPredictor; if
    it exposes a `reference` ActionSequence the trace records distances to it.

    Returns (ActionSequence, DenoiseTrace).
    """
    predictor = predictor_factory(demo, obs, horizon)
    reference = getattr(predictor, "reference", None)
    ref_vec = reference.encode() if reference is not None else None

    a_k = canonicalize_vector(rng.standard_normal(horizon * STEP_DIM))
    graph = build_graph(demo, obs, ActionSequence.decode(a_k, horizon))

    trace = DenoiseTrace()
    if ref_vec is not None:
        trace.rows.append((schedule.steps + 1,
                           float(np.linalg.norm(graph.action_vector - ref_vec))))
    for k in range(schedule.steps, 0, -1):
        graph = denoise_step(graph, k, schedule, predictor, rng)
        if ref_vec is not None:
            trace.rows.append((k, float(np.linalg.norm(
                graph.action_vector - ref_vec))))

    actions = graph.actions()
    if copy_gripper and reference is not None:
        actions = ActionSequence(actions.poses, reference.gripper_logits)
    return actions, trace


def reference_factory(target_label: int | None = None):
    """Factory wiring warp_reference into the denoising loop."""
    def factory(demo: Demonstration, obs: Observation, horizon: int):
        a_star = warp_reference(demo, obs, horizon, target_label=target_label)
        return reference_predictor(a_star)
    return factory
