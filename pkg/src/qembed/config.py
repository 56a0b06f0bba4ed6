"""Declarative experiment configs.

One YAML file describes one experiment: which model, which parameters are
randomized and with what templates, the target grid, replication counts and
seeds, and where the artifacts go.  Loading is strict: unknown keys and
out-of-domain grids are rejected with the offending field named, so a bad
file fails before any simulation starts.

A run's manifest embeds the resolved config under a ``config`` key;
``load_config`` accepts such a manifest directly, which is how a recorded
run is reproduced.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import yaml

from .coeffs import CoeffTemplate, DiscreteDomain, RandomizedParam
from .network import DEFAULT_TEMPLATES, PARAM_DOMAIN, PARAM_ORDER
from .queues import VARIANT_AXIS, SlotModel

KINDS = ("sweep", "oracle-curve", "slice2d", "overhead", "campaign")
QUEUE_MODELS = tuple(VARIANT_AXIS)
GEO_SERVICE = ("gg1c", "ggk")
DET_SERVICE = ("gd1c", "gdk")
CAMPAIGN_METHODS = ("cobyla", "spsa", "spsa-discrete")


class ValidationError(ValueError):
    """A config field failed validation; `field` names it."""

    def __init__(self, field_name, message):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


def _require(data, key):
    if key not in data:
        raise ValidationError(key, "required field is missing")
    return data[key]


def _as_int(key, value, minimum=None):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(key, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(key, f"must be >= {minimum}, got {value}")
    return value


def _as_prob(key, value, closed=True):
    try:
        p = float(value)
    except (TypeError, ValueError):
        raise ValidationError(key, f"expected a number, got {value!r}")
    lo_ok = p >= 0.0 if closed else p > 0.0
    if not (lo_ok and p <= 1.0):
        raise ValidationError(key, f"must lie in [0, 1], got {value}")
    return p


def _as_template(key, value):
    if not isinstance(value, dict):
        raise ValidationError(key, "expected a mapping with half_width/spread/skew")
    extra = set(value) - {"half_width", "spread", "skew"}
    if extra:
        raise ValidationError(key, f"unknown template key {sorted(extra)[0]!r}")
    try:
        return CoeffTemplate(
            _as_int(key, _require(value, "half_width"), minimum=1),
            float(_require(value, "spread")),
            float(_require(value, "skew")),
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ValidationError(key, str(exc))


def _template_dict(tpl: CoeffTemplate) -> dict:
    return {"half_width": tpl.half_width, "spread": tpl.spread, "skew": tpl.skew}


def _as_domain(key, value):
    if not (isinstance(value, (list, tuple)) and len(value) == 2):
        raise ValidationError(key, f"expected [lo, hi], got {value!r}")
    lo = _as_int(key, value[0], minimum=1)
    hi = _as_int(key, value[1])
    if hi <= lo:
        raise ValidationError(key, f"needs lo < hi, got [{lo}, {hi}]")
    return (lo, hi)


def _segment_points(key, seg):
    extra = set(seg) - {"start", "stop", "step"}
    if extra:
        raise ValidationError(key, f"unknown grid key {sorted(extra)[0]!r}")
    try:
        start = float(_require(seg, "start"))
        stop = float(_require(seg, "stop"))
        step = float(_require(seg, "step"))
    except (TypeError, ValueError):
        raise ValidationError(key, "start/stop/step must be numbers")
    if step <= 0 or stop < start:
        raise ValidationError(key, f"needs step > 0 and stop >= start, got {seg}")
    n = int((stop - start) / step + 1e-9) + 1
    return [round(start + i * step, 9) for i in range(n)]


def _as_grid(key, value):
    if not isinstance(value, dict):
        raise ValidationError(key, "expected a mapping (points / start,stop,step / segments)")
    if "points" in value:
        if set(value) != {"points"}:
            raise ValidationError(key, "points cannot be combined with other grid keys")
        pts = value["points"]
        if not (isinstance(pts, list) and pts):
            raise ValidationError(key, "points must be a non-empty list")
        try:
            return tuple(float(p) for p in pts)
        except (TypeError, ValueError):
            raise ValidationError(key, "points must be numbers")
    if "segments" in value:
        if set(value) != {"segments"}:
            raise ValidationError(key, "segments cannot be combined with other grid keys")
        out = []
        for seg in value["segments"]:
            if not isinstance(seg, dict):
                raise ValidationError(key, "each segment must be a mapping")
            out.extend(_segment_points(key, seg))
        return tuple(out)
    return tuple(_segment_points(key, value))


def _check_grid_in(key, grid, lo, hi):
    for y in grid:
        if not lo <= y <= hi:
            raise ValidationError(key, f"point {y} outside domain [{lo}, {hi}]")


@dataclass(frozen=True)
class ExperimentConfig:
    """A fully validated experiment declaration."""

    kind: str
    model: str
    out: str
    label: str = ""
    seed: int = 0
    # queue sweeps / oracle curves
    arrival_p: float | None = None
    service_q: float | None = None
    service_T: int | None = None
    axis: str | None = None
    domain: tuple | None = None
    template: CoeffTemplate | None = None
    panels: tuple = ()
    grid: tuple = ()
    oracle: bool = False
    replications: int | None = None
    horizon: int | None = None
    # network experiments
    q2: float | None = None
    slices: tuple = ()
    fixed_target: int = 5
    templates: dict = field(default_factory=dict)
    runs: int | None = None
    methods: tuple = ()
    n_runs: int | None = None
    budget: int | None = None

    def grid_points(self) -> tuple:
        return self.grid

    def sweep_templates(self) -> tuple:
        """The per-curve templates: the single one, or one per panel."""
        return self.panels if self.panels else (self.template,)

    def slot_model(self, template: CoeffTemplate) -> SlotModel:
        lo, hi = self.domain
        param = RandomizedParam(DiscreteDomain(lo, hi), float(lo), template)
        return SlotModel(
            self.model,
            self.arrival_p,
            q=self.service_q,
            T=self.service_T,
            randomized={self.axis: param},
        )

    def resolved(self) -> dict:
        """Plain mapping with every effective field; valid as config input."""
        out = {
            "kind": self.kind,
            "model": self.model,
            "out": self.out,
            "label": self.label,
            "seed": self.seed,
        }
        if self.kind in ("sweep", "oracle-curve") and self.model != "coeffs":
            out["arrival_p"] = self.arrival_p
            if self.service_q is not None:
                out["service_q"] = self.service_q
            if self.service_T is not None:
                out["service_T"] = self.service_T
            out["axis"] = self.axis
        if self.kind in ("sweep", "oracle-curve"):
            out["domain"] = list(self.domain)
            out["grid"] = {"points": list(self.grid)}
            if self.panels:
                out["panels"] = [_template_dict(t) for t in self.panels]
            else:
                out["template"] = _template_dict(self.template)
        if self.kind == "sweep":
            out["replications"] = self.replications
            out["horizon"] = self.horizon
            out["oracle"] = self.oracle
        if self.kind in ("slice2d", "overhead", "campaign"):
            out["arrival_p"] = self.arrival_p
            out["q2"] = self.q2
            out["templates"] = {
                name: _template_dict(t) for name, t in self.templates.items()
            }
        if self.kind == "slice2d":
            out["slices"] = [list(pair) for pair in self.slices]
            out["grid"] = {"points": list(self.grid)}
            out["fixed_target"] = self.fixed_target
            out["replications"] = self.replications
            out["horizon"] = self.horizon
        if self.kind == "overhead":
            out["runs"] = self.runs
            out["horizon"] = self.horizon
        if self.kind == "campaign":
            out["methods"] = list(self.methods)
            out["n_runs"] = self.n_runs
            out["budget"] = self.budget
            out["horizon"] = self.horizon
        return out


def _common_fields(data, default_out):
    out = data.get("out", default_out)
    if not isinstance(out, str) or not out or "/" in out or "\\" in out:
        raise ValidationError("out", f"must be a plain artifact base name, got {out!r}")
    label = data.get("label", "")
    if not isinstance(label, str):
        raise ValidationError("label", "must be a string")
    seed = _as_int("seed", data.get("seed", 0), minimum=0)
    return out, label, seed


def _check_known(data, allowed):
    for key in data:
        if key not in allowed:
            raise ValidationError(key, "unknown field")


_COMMON = {"kind", "model", "out", "label", "seed"}


def _queue_service(data, model):
    service_q = service_T = None
    if model in GEO_SERVICE:
        service_q = _as_prob("service_q", _require(data, "service_q"))
        if "service_T" in data:
            raise ValidationError("service_T", f"not a parameter of model {model}")
    elif model in DET_SERVICE:
        service_T = _as_int("service_T", _require(data, "service_T"), minimum=1)
        if "service_q" in data:
            raise ValidationError("service_q", f"not a parameter of model {model}")
    else:  # gd1t embeds its service time, no extra service constant
        for key in ("service_q", "service_T"):
            if key in data:
                raise ValidationError(key, f"not a parameter of model {model}")
    return service_q, service_T


def _queue_curve_fields(data, kind):
    model = data["model"]
    arrival_p = _as_prob("arrival_p", _require(data, "arrival_p"))
    service_q, service_T = _queue_service(data, model)
    axis = _require(data, "axis")
    if axis != VARIANT_AXIS[model]:
        raise ValidationError(
            "axis", f"model {model} embeds {VARIANT_AXIS[model]!r}, got {axis!r}"
        )
    domain = _as_domain("domain", _require(data, "domain"))
    grid = _as_grid("grid", _require(data, "grid"))
    _check_grid_in("grid", grid, *domain)
    template, panels = _curve_templates(data, kind)
    return dict(
        arrival_p=arrival_p,
        service_q=service_q,
        service_T=service_T,
        axis=axis,
        domain=domain,
        grid=grid,
        template=template,
        panels=panels,
    )


def _curve_templates(data, kind):
    has_template = "template" in data and data["template"] is not None
    has_panels = "panels" in data and data["panels"] is not None
    if has_template == has_panels:
        raise ValidationError(
            "template", "provide exactly one of 'template' or 'panels'"
        )
    if has_template:
        return _as_template("template", data["template"]), ()
    panels = data["panels"]
    if not (isinstance(panels, list) and panels):
        raise ValidationError("panels", "must be a non-empty list of templates")
    return None, tuple(_as_template("panels", p) for p in panels)


def _network_common(data):
    arrival_p = _as_prob("arrival_p", data.get("arrival_p", 0.5))
    q2 = _as_prob("q2", data.get("q2", 0.1), closed=False)
    merged = dict(DEFAULT_TEMPLATES)
    overrides = data.get("templates", {})
    if not isinstance(overrides, dict):
        raise ValidationError("templates", "expected a mapping of parameter names")
    for name, tpl in overrides.items():
        if name not in PARAM_ORDER:
            raise ValidationError(
                "templates", f"unknown parameter {name!r}; valid: {', '.join(PARAM_ORDER)}"
            )
        merged[name] = _as_template("templates", tpl)
    return arrival_p, q2, merged


def config_from_mapping(data, default_out="experiment") -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ValidationError("config", "top level must be a mapping")
    if isinstance(data.get("config"), dict) and "artifacts" in data:
        data = data["config"]  # a manifest: re-run its recorded config
    kind = _require(data, "kind")
    if kind not in KINDS:
        raise ValidationError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    model = _require(data, "model")
    out, label, seed = _common_fields(data, default_out)
    base = dict(kind=kind, model=model, out=out, label=label, seed=seed)

    if kind == "sweep":
        if model not in QUEUE_MODELS:
            raise ValidationError(
                "model", f"sweep needs one of {', '.join(QUEUE_MODELS)}, got {model!r}"
            )
        _check_known(
            data,
            _COMMON
            | {
                "arrival_p",
                "service_q",
                "service_T",
                "axis",
                "domain",
                "grid",
                "template",
                "panels",
                "replications",
                "horizon",
                "oracle",
            },
        )
        fields = _queue_curve_fields(data, kind)
        oracle = data.get("oracle", False)
        if not isinstance(oracle, bool):
            raise ValidationError("oracle", "must be true or false")
        return ExperimentConfig(
            **base,
            **fields,
            replications=_as_int("replications", _require(data, "replications"), 1),
            horizon=_as_int("horizon", _require(data, "horizon"), 1),
            oracle=oracle,
        )

    if kind == "oracle-curve":
        if model == "coeffs":
            _check_known(data, _COMMON | {"domain", "grid", "template", "panels"})
            domain = _as_domain("domain", _require(data, "domain"))
            grid = _as_grid("grid", _require(data, "grid"))
            _check_grid_in("grid", grid, *domain)
            template, panels = _curve_templates(data, kind)
            return ExperimentConfig(
                **base, domain=domain, grid=grid, template=template, panels=panels
            )
        if model not in QUEUE_MODELS:
            raise ValidationError(
                "model",
                f"oracle-curve needs 'coeffs' or one of {', '.join(QUEUE_MODELS)},"
                f" got {model!r}",
            )
        _check_known(
            data,
            _COMMON
            | {
                "arrival_p",
                "service_q",
                "service_T",
                "axis",
                "domain",
                "grid",
                "template",
                "panels",
            },
        )
        return ExperimentConfig(**base, **_queue_curve_fields(data, kind))

    if model != "network":
        raise ValidationError("model", f"{kind} runs on the network model, got {model!r}")
    arrival_p, q2, templates = _network_common(data)
    net = dict(arrival_p=arrival_p, q2=q2, templates=templates)

    if kind == "slice2d":
        _check_known(
            data,
            _COMMON
            | {
                "arrival_p",
                "q2",
                "templates",
                "slices",
                "grid",
                "fixed_target",
                "replications",
                "horizon",
            },
        )
        raw = _require(data, "slices")
        if not (isinstance(raw, list) and raw):
            raise ValidationError("slices", "must be a non-empty list of [a, b] pairs")
        slices = []
        for pair in raw:
            if not (isinstance(pair, (list, tuple)) and len(pair) == 2):
                raise ValidationError("slices", f"expected [a, b] pairs, got {pair!r}")
            a, b = pair
            for name in (a, b):
                if name not in PARAM_ORDER:
                    raise ValidationError(
                        "slices",
                        f"unknown parameter {name!r}; valid: {', '.join(PARAM_ORDER)}",
                    )
            if a == b:
                raise ValidationError("slices", f"pair {pair!r} repeats a parameter")
            slices.append((a, b))
        grid = _as_grid("grid", _require(data, "grid"))
        _check_grid_in("grid", grid, PARAM_DOMAIN.lo, PARAM_DOMAIN.hi)
        fixed = _as_int("fixed_target", data.get("fixed_target", 5), 1)
        if fixed > PARAM_DOMAIN.hi:
            raise ValidationError(
                "fixed_target", f"must be <= {PARAM_DOMAIN.hi}, got {fixed}"
            )
        return ExperimentConfig(
            **base,
            **net,
            slices=tuple(slices),
            grid=grid,
            fixed_target=fixed,
            replications=_as_int("replications", _require(data, "replications"), 1),
            horizon=_as_int("horizon", _require(data, "horizon"), 1),
        )

    if kind == "overhead":
        _check_known(data, _COMMON | {"arrival_p", "q2", "templates", "runs", "horizon"})
        return ExperimentConfig(
            **base,
            **net,
            runs=_as_int("runs", _require(data, "runs"), 1),
            horizon=_as_int("horizon", _require(data, "horizon"), 1),
        )

    # campaign
    _check_known(
        data,
        _COMMON | {"arrival_p", "q2", "templates", "methods", "n_runs", "budget", "horizon"},
    )
    raw = _require(data, "methods")
    if not (isinstance(raw, list) and raw):
        raise ValidationError("methods", "must be a non-empty list")
    for m in raw:
        if m not in CAMPAIGN_METHODS:
            raise ValidationError(
                "methods",
                f"unknown method {m!r}; valid: {', '.join(CAMPAIGN_METHODS)}",
            )
    if len(set(raw)) != len(raw):
        raise ValidationError("methods", "methods must be distinct")
    return ExperimentConfig(
        **base,
        **net,
        methods=tuple(raw),
        n_runs=_as_int("n_runs", _require(data, "n_runs"), 1),
        budget=_as_int("budget", _require(data, "budget"), 1),
        horizon=_as_int("horizon", _require(data, "horizon"), 1),
    )


def load_config(path) -> ExperimentConfig:
    """Parse and validate one config (or manifest) file.

    OSError and yaml.YAMLError propagate for the caller to map onto the
    I/O and parse exit codes; field problems raise ValidationError.
    """
    p = Path(str(path))
    data = yaml.safe_load(p.read_text())
    return config_from_mapping(data, default_out=p.stem)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    return replace(cfg, seed=_as_int("seed", seed, minimum=0))


def packaged_protocols() -> dict:
    """Name -> path of the experiment files shipped inside the package."""
    root = resources.files("qembed") / "protocols"
    found = {}
    for entry in root.iterdir():
        name = entry.name
        if name.endswith(".yaml"):
            found[name[: -len(".yaml")]] = entry
    return dict(sorted(found.items()))
