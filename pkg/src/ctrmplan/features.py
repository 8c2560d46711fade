"""Condition-vector construction for the motion sampler.

The sampler conditions on x = [x_goal; x_comm; x_ind]:
  x_goal  goal bearing, previous-step bearing, body parameters, and an
          embedding of the agent's local occupancy / cost-to-go windows;
  x_comm  attention-weighted aggregation of neighbor messages;
  x_ind   3-class one-hot of how the next motion deviates from the goal
          bearing (truth at training time, predicted at inference).

Raw (network-independent) parts are extracted once per sample; the learned
embeddings are recomputed each forward pass so gradients reach the feature
networks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autograd import Tensor
from .geometry import Point2
from .gridmap import CostToGoField, OccupancyGrid, build_occupancy, cost_to_go, extract_fov, fov_vector
from .instance import ProblemInstance

SELF_FEAT_DIM = 8  # xi(goal) + xi(history) + radius + speed
NBR_FEAT_DIM = 11  # xi(rel_now) + xi(rel_prev) + xi(rel_goal) + radius + speed
IND_DIM = 3


@dataclass(frozen=True)
class MotionEncoding:
    """Magnitude plus unit direction; null motion encodes as (0, (0, 0))."""

    magnitude: float
    direction: tuple[float, float]

    def as_array(self) -> np.ndarray:
        return np.array([self.magnitude, self.direction[0], self.direction[1]])


def xi(v: tuple[float, float]) -> MotionEncoding:
    mag = math.hypot(v[0], v[1])
    if mag == 0.0:
        return MotionEncoding(0.0, (0.0, 0.0))
    return MotionEncoding(mag, (v[0] / mag, v[1] / mag))


def xi_array(v: tuple[float, float]) -> np.ndarray:
    mag = math.hypot(v[0], v[1])
    if mag == 0.0:
        return np.zeros(3)
    return np.array([mag, v[0] / mag, v[1] / mag])


def select_neighbors(i: int, t: int, table, k: int = 15) -> list[int]:
    """Self first, then up to k nearest other agents at the timestep-t snapshot.

    Distance ties break toward the lower agent index.
    """
    p = table[i][t]
    others = sorted(
        (j for j in range(len(table)) if j != i),
        key=lambda j: (math.hypot(table[j][t][0] - p[0], table[j][t][1] - p[1]), j),
    )
    return [i] + others[:k]


def signed_sine(goal_vec: tuple[float, float], motion_vec: tuple[float, float]) -> float:
    """Sine of the signed angle from the goal bearing to the motion bearing."""
    gm = math.hypot(goal_vec[0], goal_vec[1])
    mm = math.hypot(motion_vec[0], motion_vec[1])
    if gm == 0.0 or mm == 0.0:
        return 0.0
    return (goal_vec[0] * motion_vec[1] - goal_vec[1] * motion_vec[0]) / (gm * mm)


def indicator_index(rho_t: Point2, rho_next: Point2, g: Point2) -> int:
    """Bin the deviation sine: 0 for [-1,-1/3], 1 for (-1/3,1/3], 2 for (1/3,1].

    An agent sitting on its goal has no goal bearing; that defaults to the
    middle (straight) bin, as does a null motion.
    """
    s = signed_sine((g[0] - rho_t[0], g[1] - rho_t[1]), (rho_next[0] - rho_t[0], rho_next[1] - rho_t[1]))
    if s <= -1.0 / 3.0:
        return 0
    if s <= 1.0 / 3.0:
        return 1
    return 2


def indicator_truth(rho_t: Point2, rho_next: Point2, g: Point2) -> np.ndarray:
    one_hot = np.zeros(IND_DIM)
    one_hot[indicator_index(rho_t, rho_next, g)] = 1.0
    return one_hot


def goal_deviation_angle(rho_t: Point2, rho_next: Point2, g: Point2) -> float:
    """Unsigned angle between goal bearing and actual motion, in [0, pi].

    With exactly one of the two vectors null the deviation is undecidable and
    we call it pi/2 (a wait while away from goal is maximally 'non-straight');
    with both null it is 0.
    """
    gv = (g[0] - rho_t[0], g[1] - rho_t[1])
    mv = (rho_next[0] - rho_t[0], rho_next[1] - rho_t[1])
    gm = math.hypot(*gv)
    mm = math.hypot(*mv)
    if gm == 0.0 and mm == 0.0:
        return 0.0
    if gm == 0.0 or mm == 0.0:
        return math.pi / 2.0
    c = (gv[0] * mv[0] + gv[1] * mv[1]) / (gm * mm)
    return math.acos(min(1.0, max(-1.0, c)))


def sample_weight(delta: float, gamma: float = 50.0) -> float:
    """Down-weight straight-to-goal motions: w = 1 - exp(-gamma * delta^2)."""
    return 1.0 - math.exp(-gamma * delta * delta)


def attention_weights(alphas: np.ndarray) -> np.ndarray:
    """Softmax over -||alpha_j - alpha_self||^2; row 0 is the self entry."""
    d = ((alphas - alphas[0]) ** 2).sum(axis=1)
    e = np.exp(-(d - d.min()))
    return e / e.sum()


def comm_aggregate(neighbor_feats: list[np.ndarray], comm_net, attn_dim: int = 10) -> np.ndarray:
    """Aggregate neighbor messages (inference path, self entry first).

    Each feature vector runs through the message net, splitting into an
    attention code and a message; messages are combined with weights that
    favor neighbors whose code matches the agent's own.
    """
    stacked = np.stack(neighbor_feats)
    out = comm_net.forward_np(stacked)
    alphas = out[:, :attn_dim]
    messages = out[:, attn_dim:]
    w = attention_weights(alphas)
    return w @ messages


def comm_aggregate_batch(alphas: Tensor, messages: Tensor, mask: np.ndarray) -> Tensor:
    """Batched, differentiable form of comm_aggregate with padding masks.

    alphas (B,K,A) and messages (B,K,M) include padded rows wherever
    mask (B,K) is 0; entry [:,0] is always the valid self entry.
    """
    b, k, _ = alphas.shape
    diff = alphas - alphas[:, 0:1, :]
    score = -(diff**2).sum(axis=2)
    mask_t = Tensor(mask)
    masked = score * mask_t + Tensor((mask - 1.0) * 1e30)
    shift = Tensor(masked.max_detached(axis=1, keepdims=True))
    e = (masked - shift).exp() * mask_t
    w = e / e.sum(axis=1, keepdims=True)
    return (messages * w.reshape(b, k, 1)).sum(axis=1)


def compose(x_goal: np.ndarray, x_comm: np.ndarray, x_ind: np.ndarray) -> np.ndarray:
    """Fixed-order concatenation of the three condition blocks."""
    return np.concatenate([x_goal, x_comm, x_ind])


@dataclass
class FeatureContext:
    """Per-instance grids and cost fields reused across feature extractions."""

    inst: ProblemInstance
    grids: list[OccupancyGrid]
    fields: list[CostToGoField]
    fov_l: int

    @classmethod
    def build(cls, inst: ProblemInstance, grid_resolution: int, fov_l: int) -> "FeatureContext":
        by_radius: dict[float, OccupancyGrid] = {}
        grids = []
        for agent in inst.agents:
            grid = by_radius.get(agent.radius)
            if grid is None:
                grid = build_occupancy(inst.world, agent, grid_resolution)
                by_radius[agent.radius] = grid
            grids.append(grid)
        # A free continuous goal can sit in a coarse occupied cell; seed BFS anyway.
        fields = [
            cost_to_go(grid, goal, force_free_goal=True)
            for grid, goal in zip(grids, inst.goals)
        ]
        return cls(inst, grids, fields, fov_l)

    def fov_vec(self, agent_index: int, p: Point2) -> np.ndarray:
        maps = extract_fov(self.grids[agent_index], self.fields[agent_index], p, self.fov_l)
        return fov_vector(maps)


@dataclass
class RawRecord:
    """Network-independent feature parts for one (agent, timestep) sample."""

    self_feat: np.ndarray  # (SELF_FEAT_DIM,)
    self_fov: np.ndarray  # (2*l*l,)
    nbr_feat: np.ndarray  # (n, NBR_FEAT_DIM), self entry first
    nbr_fov: np.ndarray  # (n, 2*l*l)


def build_raw_record(
    ctx: FeatureContext,
    now: list[Point2],
    prev: list[Point2],
    i: int,
    k_neighbors: int = 15,
    fov_cache: dict[int, np.ndarray] | None = None,
) -> RawRecord:
    """Extract raw features for agent i given position snapshots now / prev.

    fov_cache maps agent index to its window vector at this snapshot; pass a
    per-timestep dict when extracting for many agents at once.
    """
    inst = ctx.inst
    p = now[i]
    agent = inst.agents[i]

    def fov_of(j: int) -> np.ndarray:
        if fov_cache is not None and j in fov_cache:
            return fov_cache[j]
        vec = ctx.fov_vec(j, now[j])
        if fov_cache is not None:
            fov_cache[j] = vec
        return vec

    goal = inst.goals[i]
    self_feat = np.concatenate(
        [
            xi_array((goal[0] - p[0], goal[1] - p[1])),
            xi_array((prev[i][0] - p[0], prev[i][1] - p[1])),
            [agent.radius, agent.max_speed],
        ]
    )
    table = [[q] for q in now]
    order = select_neighbors(i, 0, table, k_neighbors)
    fdim = 2 * ctx.fov_l * ctx.fov_l
    nbr_feat = np.empty((len(order), NBR_FEAT_DIM))
    nbr_fov = np.empty((len(order), fdim))
    for row, j in enumerate(order):
        q = now[j]
        gj = inst.goals[j]
        nbr_feat[row] = np.concatenate(
            [
                xi_array((q[0] - p[0], q[1] - p[1])),
                xi_array((prev[j][0] - p[0], prev[j][1] - p[1])),
                xi_array((gj[0] - p[0], gj[1] - p[1])),
                [inst.agents[j].radius, inst.agents[j].max_speed],
            ]
        )
        nbr_fov[row] = fov_of(j)
    return RawRecord(self_feat, fov_of(i), nbr_feat, nbr_fov)


@dataclass
class SampleSet:
    """Training samples in a compact shared-window layout.

    Window vectors are deduplicated into `fov`; samples reference them by row.
    Neighbor rows for sample s live at nbr_off[s]:nbr_off[s+1] with the self
    entry first.
    """

    fov: np.ndarray  # (U, 2*l*l) float32
    self_feat: np.ndarray  # (S, SELF_FEAT_DIM)
    self_fov_idx: np.ndarray  # (S,) int32
    nbr_feat: np.ndarray  # (R, NBR_FEAT_DIM)
    nbr_fov_idx: np.ndarray  # (R,) int32
    nbr_off: np.ndarray  # (S+1,) int64
    y: np.ndarray  # (S, 3)
    weight: np.ndarray  # (S,)
    ind_truth: np.ndarray  # (S,) int8
    fov_l: int

    @property
    def size(self) -> int:
        return len(self.self_feat)

    def save(self, path: str) -> None:
        with open(path, "wb") as fh:
            self._savez(fh)

    def _savez(self, fh) -> None:
        # a file handle keeps the exact filename (savez appends .npz to paths)
        np.savez_compressed(
            fh,
            fov=self.fov,
            self_feat=self.self_feat,
            self_fov_idx=self.self_fov_idx,
            nbr_feat=self.nbr_feat,
            nbr_fov_idx=self.nbr_fov_idx,
            nbr_off=self.nbr_off,
            y=self.y,
            weight=self.weight,
            ind_truth=self.ind_truth,
            fov_l=np.array(self.fov_l),
        )

    @classmethod
    def load(cls, path: str) -> "SampleSet":
        with np.load(path) as data:
            return cls(
                fov=data["fov"],
                self_feat=data["self_feat"],
                self_fov_idx=data["self_fov_idx"],
                nbr_feat=data["nbr_feat"],
                nbr_fov_idx=data["nbr_fov_idx"],
                nbr_off=data["nbr_off"],
                y=data["y"],
                weight=data["weight"],
                ind_truth=data["ind_truth"],
                fov_l=int(data["fov_l"]),
            )


def flat_record(ds: SampleSet, s: int) -> dict:
    """One sample as a flat numeric record {x, y, weight, x_ind_truth}.

    x concatenates the raw condition inputs: self features, self window, then
    each neighbor's features and window in neighbor order.
    """
    lo, hi = int(ds.nbr_off[s]), int(ds.nbr_off[s + 1])
    parts = [ds.self_feat[s], ds.fov[ds.self_fov_idx[s]].astype(np.float64)]
    for r in range(lo, hi):
        parts.append(ds.nbr_feat[r])
        parts.append(ds.fov[ds.nbr_fov_idx[r]].astype(np.float64))
    return {
        "x": np.concatenate(parts),
        "y": ds.y[s].copy(),
        "weight": float(ds.weight[s]),
        "x_ind_truth": int(ds.ind_truth[s]),
    }


def assemble_batch(ds: SampleSet, idx: np.ndarray) -> dict[str, np.ndarray]:
    """Gather and pad one minibatch for the trainer."""
    b = len(idx)
    counts = (ds.nbr_off[idx + 1] - ds.nbr_off[idx]).astype(int)
    k = int(counts.max())
    fdim = ds.fov.shape[1]
    nbr_feat = np.zeros((b, k, NBR_FEAT_DIM))
    nbr_fov = np.zeros((b, k, fdim))
    mask = np.zeros((b, k))
    for row, s in enumerate(idx):
        lo, hi = int(ds.nbr_off[s]), int(ds.nbr_off[s + 1])
        n = hi - lo
        nbr_feat[row, :n] = ds.nbr_feat[lo:hi]
        nbr_fov[row, :n] = ds.fov[ds.nbr_fov_idx[lo:hi]]
        mask[row, :n] = 1.0
    return {
        "self_feat": ds.self_feat[idx],
        "self_fov": ds.fov[ds.self_fov_idx[idx]].astype(np.float64),
        "nbr_feat": nbr_feat,
        "nbr_fov": nbr_fov,
        "nbr_mask": mask,
        "y": ds.y[idx],
        "weight": ds.weight[idx],
        "ind_truth": ds.ind_truth[idx].astype(int),
    }
