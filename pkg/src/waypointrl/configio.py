"""Flat key=value experiment configuration.

The on-disk format is one `key = value` per line with dotted section
prefixes, '#' comments, and blank lines ignored. Unknown keys are rejected so
typos fail loudly. The same flat dict round-trips through config snapshots in
run directories.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .buffer import RelabelConfig
from .clearning import TrainConfig
from .env import DEFAULT_EPISODE_STEPS, LAYOUTS
from .errors import UsageError
from .planner import PlannerConfig

METHODS = (
    "c_planning",
    "c_learning",
    "c_planning_optimal",
    "sorb_eval",
    "c_planning_plus_sorb",
)


@dataclass
class ExperimentConfig:
    method: str = "c_planning"
    seed: int = 0
    env_name: str = "four_rooms"
    episode_steps: int = 0  # 0 means the layout default
    total_steps: int = 200_000
    warmup_steps: int = 1000
    eval_interval: int = 5000
    eval_episodes: int = 20
    success_threshold: float = 1.0
    hidden: tuple = (64, 64)
    buffer_capacity: int = 1_000_000
    search_nodes: int = 1000
    search_cost_cutoff: float = 3.0
    train: TrainConfig = field(default_factory=TrainConfig)
    relabel: RelabelConfig = field(default_factory=RelabelConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise UsageError(f"unknown method {self.method!r}; choose from {METHODS}")
        if self.env_name not in LAYOUTS:
            raise UsageError(f"unknown env {self.env_name!r}; choose from {sorted(LAYOUTS)}")
        if self.total_steps < 1 or self.eval_interval < 1 or self.eval_episodes < 1:
            raise UsageError("step counts and eval settings must be positive")

    @property
    def resolved_episode_steps(self) -> int:
        return self.episode_steps or DEFAULT_EPISODE_STEPS[self.env_name]


@dataclass(frozen=True)
class ResolvedMethod:
    """What a method tag actually changes: data collection and evaluation.

    Gradient updates are shared by construction; nothing here touches them.
    """

    collection_n_g: int
    use_oracle_classifier: bool
    eval_with_search: bool


def resolve_method(config: ExperimentConfig) -> ResolvedMethod:
    n_g = config.planner.n_g_max
    table = {
        "c_planning": ResolvedMethod(n_g, False, False),
        "c_learning": ResolvedMethod(0, False, False),
        "c_planning_optimal": ResolvedMethod(n_g, True, False),
        "sorb_eval": ResolvedMethod(0, False, True),
        "c_planning_plus_sorb": ResolvedMethod(n_g, False, True),
    }
    return table[config.method]


def _parse_hidden(text: str) -> tuple:
    try:
        sizes = tuple(int(p) for p in str(text).replace("(", "").replace(")", "").split(",") if p.strip())
    except ValueError as exc:
        raise UsageError(f"bad hidden sizes {text!r}") from exc
    if not sizes:
        raise UsageError("hidden sizes must be nonempty")
    return sizes


def _fmt_hidden(sizes) -> str:
    return ",".join(str(s) for s in sizes)


# key -> (attribute path, parser, formatter)
_KEYS = {
    "method": (("method",), str, str),
    "seed": (("seed",), int, str),
    "env.name": (("env_name",), str, str),
    "env.episode_steps": (("episode_steps",), int, str),
    "train.total_steps": (("total_steps",), int, str),
    "train.warmup_steps": (("warmup_steps",), int, str),
    "train.eval_interval": (("eval_interval",), int, str),
    "train.eval_episodes": (("eval_episodes",), int, str),
    "train.success_threshold": (("success_threshold",), float, repr),
    "train.hidden": (("hidden",), _parse_hidden, _fmt_hidden),
    "buffer.capacity": (("buffer_capacity",), int, str),
    "buffer.relabel_next": (("relabel", "p_next"), float, repr),
    "buffer.relabel_future": (("relabel", "p_future"), float, repr),
    "clearning.gamma": (("train", "gamma"), float, repr),
    "clearning.actor_lr": (("train", "actor_lr"), float, repr),
    "clearning.critic_lr": (("train", "critic_lr"), float, repr),
    "clearning.state_critic_lr": (("train", "state_critic_lr"), float, repr),
    "clearning.actor_loss_weight": (("train", "actor_loss_weight"), float, repr),
    "clearning.critic_loss_weight": (("train", "critic_loss_weight"), float, repr),
    "clearning.tau": (("train", "tau"), float, repr),
    "clearning.batch_size": (("train", "batch_size"), int, str),
    "clearning.entropy_coef": (("train", "entropy_coef"), float, repr),
    "planner.n_g": (("planner", "n_g_max"), int, str),
    "planner.eps_d": (("planner", "eps_d"), float, repr),
    "planner.m_candidates": (("planner", "m_candidates"), int, str),
    "planner.temperature": (("planner", "temperature"), float, repr),
    "planner.max_steps_per_waypoint": (("planner", "max_steps_per_waypoint"), int, str),
    "search.nodes": (("search_nodes",), int, str),
    "search.cost_cutoff": (("search_cost_cutoff",), float, repr),
}


def config_from_flat(flat: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a flat key->string dict."""
    top: dict = {}
    nested: dict = {"train": {}, "relabel": {}, "planner": {}}
    for key, raw in flat.items():
        if key not in _KEYS:
            raise UsageError(f"unknown config key {key!r}")
        path, parser, _ = _KEYS[key]
        try:
            value = parser(raw)
        except UsageError:
            raise
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {key}: {raw!r}") from exc
        if len(path) == 1:
            top[path[0]] = value
        else:
            nested[path[0]][path[1]] = value
    kwargs = dict(top)
    kwargs["train"] = TrainConfig(**nested["train"])
    kwargs["relabel"] = RelabelConfig(**nested["relabel"])
    kwargs["planner"] = PlannerConfig(**nested["planner"])
    return ExperimentConfig(**kwargs)


def config_to_flat(config: ExperimentConfig) -> dict:
    flat = {}
    for key, (path, _, fmt) in _KEYS.items():
        obj = config
        for part in path[:-1]:
            obj = getattr(obj, part)
        flat[key] = fmt(getattr(obj, path[-1]))
    return flat


def parse_config_text(text: str) -> dict:
    """Parse `key = value` lines into a flat string dict."""
    flat = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise UsageError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = body.split("=", 1)
        flat[key.strip()] = value.strip()
    return flat


def format_config_text(flat: dict) -> str:
    return "".join(f"{key} = {flat[key]}\n" for key in sorted(flat))


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        flat = parse_config_text(handle.read())
    flat.update(overrides or {})
    return config_from_flat(flat)


def with_overrides(config: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(config, **changes)
