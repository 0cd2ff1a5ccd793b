"""Build, persist and slice corpora of trained agents ("zoos").

A zoo is the training set for the weight-space generative model: each record
holds one agent's 212-float weight vector, its measured survival time, the
survival-time group, and the seed/budget that produced it. Weights are
float32 on disk; records are snapped to float32 before evaluation and
storage so a saved-and-reloaded zoo is bit-identical to the in-memory one.

On-disk layout (little-endian throughout):

    8 bytes   magic  b"POLEZOO1"
    u32       format version (1)
    u32       length of the metadata block
    bytes     metadata, canonical JSON (zoos are self-describing)
    u64       record count
    records   each 873 bytes: id u64, survival f32, group u8, seed u64,
              budget u32, 212 x f32 weights
"""

from __future__ import annotations

import enum
import json
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np

from .agent import N_PARAMS, TrainConfig, devectorize, survival_time, train_agent, train_agent_snapshots
from .errors import ContractViolation, FileFormatError, NumericalError, RecordNotFound
from .rng import EVAL_STREAM, BUDGET_STREAM, child_seeds, make_rng, tagged_rng

MAGIC = b"POLEZOO1"
FORMAT_VERSION = 1

_RECORD_DTYPE = np.dtype([
    ("id", "<u8"),
    ("survival", "<f4"),
    ("group", "u1"),
    ("seed", "<u8"),
    ("budget", "<u4"),
    ("weights", "<f4", (N_PARAMS,)),
])


class Group(enum.IntEnum):
    G1 = 1  # survival in [1, 50]
    G2 = 2  # (50, 100]
    G3 = 3  # (100, 150]
    G4 = 4  # (150, 200]


def bin_survival(survival: float) -> Group:
    """Survival-time group; boundaries are half-open on the left except G1."""
    if not 1.0 <= survival <= 200.0:
        raise ContractViolation(f"survival time {survival} outside [1, 200]")
    if survival <= 50.0:
        return Group.G1
    if survival <= 100.0:
        return Group.G2
    if survival <= 150.0:
        return Group.G3
    return Group.G4


@dataclass
class AgentRecord:
    id: int
    weights: np.ndarray  # float64 values on the float32 grid
    survival_time: float
    group: Group
    seed: int
    train_budget: int

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (N_PARAMS,):
            raise ContractViolation(f"record weights must have length {N_PARAMS}")
        if not np.isfinite(self.weights).all():
            raise ContractViolation("record weights must be finite")


@dataclass
class Zoo:
    records: list[AgentRecord]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ContractViolation("record ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, record_id: int) -> AgentRecord:
        for r in self.records:
            if r.id == record_id:
                return r
        raise RecordNotFound(
            f"no record with id {record_id}; available ids: "
            + ", ".join(str(r.id) for r in self.records[:50])
            + (" ..." if len(self.records) > 50 else "")
        )

    def weights_matrix(self) -> np.ndarray:
        """(n, 212) float64 matrix of all record weights."""
        if not self.records:
            return np.empty((0, N_PARAMS))
        return np.stack([r.weights for r in self.records])

    def group_counts(self) -> dict[str, int]:
        counts = {g.name: 0 for g in Group}
        for r in self.records:
            counts[r.group.name] += 1
        return counts


@dataclass
class BudgetDistribution:
    """Mixture of log-uniform episode-budget buckets: (low, high, weight).

    The default mixture spreads agents across all four survival groups:
    short budgets stay near the constant-action baseline, mid budgets land
    in the 50-150 range, long budgets usually clear 150.
    """

    buckets: tuple = ((5, 60, 0.35), (60, 250, 0.30), (250, 600, 0.35))

    def __post_init__(self):
        for lo, hi, w in self.buckets:
            if not (1 <= lo <= hi) or w <= 0:
                raise ContractViolation(f"bad budget bucket {(lo, hi, w)}")

    def draw(self, rng: np.random.Generator) -> int:
        weights = np.array([w for _, _, w in self.buckets])
        i = rng.choice(len(self.buckets), p=weights / weights.sum())
        lo, hi, _ = self.buckets[i]
        return int(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))))

    @classmethod
    def fixed(cls, episodes: int) -> "BudgetDistribution":
        return cls(buckets=((episodes, episodes, 1.0),))

    @classmethod
    def log_uniform(cls, low: int, high: int) -> "BudgetDistribution":
        return cls(buckets=((low, high, 1.0),))


def _snap_f32(weights: np.ndarray) -> np.ndarray:
    return weights.astype(np.float32).astype(np.float64)


def _make_record(record_id: int, weights: np.ndarray, seed: int, budget: int,
                 eval_episodes: int) -> AgentRecord:
    weights = _snap_f32(weights)
    st = survival_time(devectorize(weights), tagged_rng(seed, EVAL_STREAM, record_id),
                       n_episodes=eval_episodes)
    st = float(np.float32(st))
    return AgentRecord(id=record_id, weights=weights, survival_time=st,
                       group=bin_survival(st), seed=int(seed), train_budget=int(budget))


def _build_task(args):
    """Train one agent (module-level so process pools can pickle it)."""
    index, seed, budget, base_config, checkpoint_every, eval_episodes, stride = args
    config = TrainConfig(**{**base_config, "episodes": budget, "seed": int(seed)})
    try:
        if checkpoint_every is None:
            net = train_agent(config)
            return index, [_make_record(index, net.params, seed, budget, eval_episodes)], None
        snaps = train_agent_snapshots(config, snapshot_every=checkpoint_every)
        records = [
            _make_record(index * stride + k, params, seed, episodes_done, eval_episodes)
            for k, (episodes_done, params) in enumerate(snaps)
        ]
        return index, records, None
    except NumericalError as err:
        return index, [], str(err)


def build_zoo(n: int, budget: BudgetDistribution | None = None, seed: int = 0,
              base_config: TrainConfig | None = None, checkpoint_every: int | None = None,
              eval_episodes: int = 100, workers: int = 1) -> Zoo:
    """Train n agents with randomized budgets and seeds; evaluate, bin, collect.

    With `checkpoint_every`, intermediate weights of each run become extra
    records (cheap diversity); ids are then agent_index * stride + snapshot.
    Deterministic for a fixed master seed regardless of `workers`. Agents
    whose training diverges are recorded in meta and skipped.
    """
    if n < 1:
        raise ContractViolation("n must be at least 1")
    budget = budget or BudgetDistribution()
    base = base_config or TrainConfig()
    base_dict = {k: v for k, v in asdict(base).items() if k not in ("episodes", "seed")}

    seeds = child_seeds(seed, n)
    budget_rng = tagged_rng(seed, BUDGET_STREAM)
    budgets = [budget.draw(budget_rng) for _ in range(n)]
    # Stride leaves room for per-agent snapshot ids without collisions.
    stride = 1 if checkpoint_every is None else max(bd // checkpoint_every for bd in budgets) + 2

    tasks = [(i, seeds[i], budgets[i], base_dict, checkpoint_every, eval_episodes, stride)
             for i in range(n)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_build_task, tasks, chunksize=4))
    else:
        outcomes = [_build_task(t) for t in tasks]

    outcomes.sort(key=lambda o: o[0])
    records, failures = [], []
    for index, recs, err in outcomes:
        records.extend(recs)
        if err is not None:
            failures.append({"agent_index": index, "error": err})

    meta = {
        "format_version": FORMAT_VERSION,
        "builder": {
            "n_agents": n,
            "master_seed": seed,
            "budget_buckets": [list(b) for b in budget.buckets],
            "train_config": base_dict,
            "checkpoint_every": checkpoint_every,
            "mode": "independent" if checkpoint_every is None else "checkpointed",
            "eval_episodes": eval_episodes,
        },
        "failures": failures,
    }
    zoo = Zoo(records=records, meta=meta)
    meta["group_counts"] = zoo.group_counts()
    return zoo


def subset(zoo: Zoo, group: Group | None = None, max_n: int | None = None,
           seed: int = 0) -> Zoo:
    """Filter by group and/or sample max_n records without replacement."""
    records = [r for r in zoo.records if group is None or r.group == group]
    if max_n is not None and max_n < len(records):
        idx = make_rng(seed).choice(len(records), size=max_n, replace=False, shuffle=False)
        records = [records[i] for i in sorted(idx)]
    meta = dict(zoo.meta)
    meta["subset"] = {"group": group.name if group else None, "max_n": max_n, "seed": seed}
    return Zoo(records=records, meta=meta)


def _atomic_write(path, data: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".zoo-tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_zoo(zoo: Zoo, path) -> None:
    """Write the binary container atomically (temp file + rename)."""
    arr = np.empty(len(zoo.records), dtype=_RECORD_DTYPE)
    for i, r in enumerate(zoo.records):
        arr[i] = (r.id, np.float32(r.survival_time), int(r.group), r.seed,
                  r.train_budget, r.weights.astype(np.float32))
    meta_bytes = json.dumps(zoo.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    header = (MAGIC
              + np.uint32(FORMAT_VERSION).tobytes()
              + np.uint32(len(meta_bytes)).tobytes()
              + meta_bytes
              + np.uint64(len(zoo.records)).tobytes())
    _atomic_write(path, header + arr.tobytes())


def load_zoo(path) -> Zoo:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 16:
        raise FileFormatError("zoo file too short for a header", offset=len(data))
    if data[:8] != MAGIC:
        raise FileFormatError(f"bad magic {data[:8]!r}, expected {MAGIC!r}", offset=0)
    version = int(np.frombuffer(data[8:12], dtype="<u4")[0])
    if version != FORMAT_VERSION:
        raise FileFormatError(f"unsupported format version {version}", offset=8)
    meta_len = int(np.frombuffer(data[12:16], dtype="<u4")[0])
    pos = 16
    if len(data) < pos + meta_len + 8:
        raise FileFormatError("truncated metadata block", offset=len(data))
    try:
        meta = json.loads(data[pos : pos + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise FileFormatError(f"metadata block is not valid JSON: {err}", offset=pos)
    pos += meta_len
    count = int(np.frombuffer(data[pos : pos + 8], dtype="<u8")[0])
    pos += 8
    expected = count * _RECORD_DTYPE.itemsize
    if len(data) - pos != expected:
        raise FileFormatError(
            f"expected {expected} bytes of records for {count} records, found {len(data) - pos}",
            offset=pos,
        )
    arr = np.frombuffer(data, dtype=_RECORD_DTYPE, count=count, offset=pos)
    records = []
    for row in arr:
        st = float(row["survival"])
        records.append(AgentRecord(
            id=int(row["id"]),
            weights=row["weights"].astype(np.float64),
            survival_time=st,
            group=Group(int(row["group"])),
            seed=int(row["seed"]),
            train_budget=int(row["budget"]),
        ))
    return Zoo(records=records, meta=meta)


def export_jsonl(zoo: Zoo, path) -> None:
    """Interoperability export: one JSON object per record."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in zoo.records:
            fh.write(json.dumps({
                "id": r.id,
                "survival_time": r.survival_time,
                "group": r.group.name,
                "seed": r.seed,
                "budget": r.train_budget,
                "weights": [float(np.float32(w)) for w in r.weights],
            }) + "\n")


def load_jsonl(path) -> Zoo:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            records.append(AgentRecord(
                id=int(obj["id"]),
                weights=np.asarray(obj["weights"], dtype=np.float64),
                survival_time=float(obj["survival_time"]),
                group=Group[obj["group"]],
                seed=int(obj["seed"]),
                train_budget=int(obj["budget"]),
            ))
    return Zoo(records=records, meta={"source": "jsonl"})
