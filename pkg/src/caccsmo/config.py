"""Run-configuration files: strict YAML parsing, presets, scenario blocks.

Configs are plain mappings validated against a fixed schema: unknown keys,
duplicate keys, missing required keys and out-of-range values are all
collected and reported together.  The named preset "table1" carries the
reference platoon, observer, noise and bound values; a file may start from
it with `preset: table1` and override fields.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np
import yaml

from .attacks import AttackScenario, SignalSpec, make_stealthy, zero_scenario
from .extended import OutputPartition
from .observer import ObserverParams
from .platoon import CarParams, NoiseSpec, PlatoonParams, PlatoonState
from .sim import SimConfig, SimSystem

__all__ = ["ConfigError", "RunConfig", "parse_config", "load_config_dict", "PRESETS"]


class ConfigError(ValueError):
    """Carries the full list of schema violations."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


# -- strict YAML ------------------------------------------------------------

class _StrictLoader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    mapping = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        if key in mapping:
            raise ConfigError(
                [f"duplicate key {key!r} at line {key_node.start_mark.line + 1}"])
        mapping[key] = loader.construct_object(value_node, deep=True)
    return mapping


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def load_config_dict(path) -> dict:
    """Parse a YAML file into a dict, rejecting duplicate keys."""
    with open(path) as fh:
        data = yaml.load(fh, Loader=_StrictLoader)
    if data is None:
        raise ConfigError([f"{path}: empty configuration file"])
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return data


# -- presets -----------------------------------------------------------------

TABLE1 = {
    "platoon": {
        "tau_lead": 0.1, "tau_fol": 0.1, "length": 4.0,
        "r_tau": 1.1, "r_tau_bounds": [1.0, 1.2],
        "h_ref": 0.7, "r": 1.5, "k_p": 0.2, "k_d": 0.7,
    },
    "initial": {
        "p_lead": 0.0, "v_lead": 8.0, "a_lead": 0.0,
        "p_fol": -11.45, "v_fol": 8.0, "a_fol": 0.0, "u_fol": 0.0,
    },
    "design": {"order": [2, 1, 3, 4], "h": 3, "a_fil": -5.0},
    "observer": {
        "rho": [11.5, 11.0, 11.0, 11.0],
        "a22s": [-1.0, -1.0, -1.0, -1.0],
        "a_nu": [-1.0, -1.0, -1.0, -1.0],
        "epsilon": 1e-3,
        "e1_init_offset": [0.0, 0.0, 0.0, 0.0, 0.0],
        "e2_init_offset": [0.0, 0.0, 0.0, 0.0],
    },
    "noise": {"bounds": [0.15, 0.30, 0.03, 0.15], "seed": 0, "distribution": "uniform"},
    "bounds": {"du_bar": 10.0, "dy_bar": [10.0, 10.0, 10.0, 10.0], "eta_tilde_bar": 1.0},
    "attack": {"du": {"kind": "zero"}, "dy1": {"kind": "zero"}, "dy2": {"kind": "zero"},
               "dy3": {"kind": "zero"}, "dy4": {"kind": "zero"}},
    "sim": {"dt": 1e-3, "horizon": 60.0, "integrator": "euler", "noiseless": False,
            "crash_stop": True, "enforce_bounds": True},
    "output": {"out_dir": "runs/out"},
}

PRESETS = {"table1": TABLE1}

_SIGNAL_KEYS = {
    "zero": set(),
    "step": {"amplitude", "onset"},
    "ramp": {"slope", "onset"},
    "sinusoid": {"amplitude", "frequency", "phase", "onset"},
    "filtered_ramp": {"slope", "pole", "onset"},
    "sampled": {"times", "values"},
}

_SCHEMA_SECTIONS = {
    "preset", "platoon", "initial", "design", "observer", "noise", "bounds",
    "attack", "sim", "output", "sweep",
}
_SECTION_KEYS = {
    "platoon": {"tau_lead", "tau_fol", "length", "r_tau", "r_tau_bounds",
                "h_ref", "r", "k_p", "k_d"},
    "initial": {"p_lead", "v_lead", "a_lead", "p_fol", "v_fol", "a_fol", "u_fol"},
    "design": {"order", "h", "a_fil"},
    "observer": {"rho", "a22s", "a_nu", "epsilon", "e1_init_offset", "e2_init_offset"},
    "noise": {"bounds", "seed", "distribution"},
    "bounds": {"du_bar", "dy_bar", "eta_tilde_bar"},
    "attack": {"du", "dy1", "dy2", "dy3", "dy4", "stealthy_from"},
    "sim": {"dt", "horizon", "integrator", "noiseless", "crash_stop",
            "enforce_bounds", "seed", "epsilon", "dwell_min"},
    "output": {"out_dir"},
    "sweep": {"attack_scale", "eta_scale", "seeds"},
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _check_keys(data: dict, errors: list):
    for key in data:
        if key not in _SCHEMA_SECTIONS:
            errors.append(f"unknown top-level key {key!r}")
    for section, allowed in _SECTION_KEYS.items():
        block = data.get(section)
        if isinstance(block, dict):
            for key in block:
                if key not in allowed:
                    errors.append(f"unknown key {section}.{key!r}")


def _parse_signal(block, where: str, errors: list) -> SignalSpec:
    if not isinstance(block, dict):
        errors.append(f"{where}: signal block must be a mapping")
        return SignalSpec()
    kind = block.get("kind", "zero")
    if kind not in _SIGNAL_KEYS:
        errors.append(f"{where}: unknown signal kind {kind!r}")
        return SignalSpec()
    extra = set(block) - _SIGNAL_KEYS[kind] - {"kind"}
    if extra:
        errors.append(f"{where}: keys {sorted(extra)} not valid for kind {kind!r}")
    try:
        kwargs = {k: v for k, v in block.items() if k != "kind"}
        if kind == "sampled":
            kwargs["times"] = tuple(kwargs.get("times", ()))
            kwargs["values"] = tuple(kwargs.get("values", ()))
        return SignalSpec(kind=kind, **kwargs)
    except (TypeError, ValueError) as exc:
        errors.append(f"{where}: {exc}")
        return SignalSpec()


@dataclass
class RunConfig:
    """Validated configuration; build_system() assembles the closed loop."""

    platoon: PlatoonParams
    init: PlatoonState
    part: OutputPartition
    a_fil: float
    observer: ObserverParams
    e1_init_offset: tuple
    e2_init_offset: tuple
    noise: NoiseSpec
    du_bar: float
    dy_bar: tuple
    eta_tilde_bar: float
    scenario: AttackScenario
    sim: SimConfig
    out_dir: str
    sweep: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def build_system(self) -> SimSystem:
        return SimSystem(
            self.platoon, self.part, self.observer, self.noise,
            a_fil=self.a_fil, du_bar=self.du_bar, dy_bar=self.dy_bar,
            eta_tilde_bar=self.eta_tilde_bar, init_state=self.init,
            e1_init_offset=np.asarray(self.e1_init_offset, dtype=float),
            e2_init_offset=np.asarray(self.e2_init_offset, dtype=float),
        )

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)


def parse_config(path=None, preset: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Load and validate a configuration.

    Sources merge in order: named preset (or the file's `preset:` key),
    then the file, then explicit overrides (CLI flags).
    """
    errors: list[str] = []
    file_data = {} if path is None else load_config_dict(path)
    preset_name = file_data.pop("preset", preset)
    if preset_name is not None and preset_name not in PRESETS:
        raise ConfigError([f"unknown preset {preset_name!r}"])
    if preset_name:
        data = copy.deepcopy(PRESETS[preset_name])
    elif path is None:
        data = copy.deepcopy(TABLE1)  # bare parse_config() gives the reference setup
    else:
        data = {}
    data = _merge(data, file_data)
    if overrides:
        data = _merge(data, overrides)
    _check_keys(data, errors)

    missing = [s for s in ("platoon", "design", "observer", "noise", "sim")
               if s not in data]
    if missing:
        errors.append(f"missing required sections: {missing}")
        raise ConfigError(errors)

    pl = data["platoon"]
    platoon = None
    try:
        platoon = PlatoonParams(
            leader=CarParams(tau=float(pl["tau_lead"]), length=float(pl["length"])),
            follower=CarParams(tau=float(pl["tau_fol"]), length=float(pl["length"])),
            r_tau=float(pl["r_tau"]), r_tau_bounds=tuple(pl["r_tau_bounds"]),
            h_ref=float(pl["h_ref"]), r=float(pl["r"]),
            k_p=float(pl["k_p"]), k_d=float(pl["k_d"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"platoon: {exc}")

    ini = data.get("initial", TABLE1["initial"])
    try:
        init = PlatoonState(**{k: float(ini[k]) for k in TABLE1["initial"]})
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"initial: {exc}")
        init = None

    ds = data["design"]
    part = None
    try:
        part = OutputPartition(order=tuple(int(i) for i in ds["order"]), h=int(ds["h"]))
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"design: {exc}")
    a_fil = float(ds.get("a_fil", -5.0))

    ob = data["observer"]
    observer = None
    try:
        observer = ObserverParams(
            rho=tuple(float(v) for v in ob["rho"]),
            a22s=tuple(float(v) for v in ob["a22s"]),
            a_nu=tuple(float(v) for v in ob["a_nu"]),
            epsilon=float(ob.get("epsilon", 1e-3)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"observer: {exc}")
    e1_off = tuple(float(v) for v in ob.get("e1_init_offset", (0.0,) * 5))
    e2_off = tuple(float(v) for v in ob.get("e2_init_offset", (0.0,) * 4))
    if part is not None and len(e1_off) != 2 + part.h:
        errors.append(f"observer.e1_init_offset needs {2 + part.h} entries, got {len(e1_off)}")
    if len(e2_off) != 4:
        errors.append("observer.e2_init_offset needs 4 entries")

    nz = data["noise"]
    noise = None
    try:
        noise = NoiseSpec(bound_per_channel=tuple(float(v) for v in nz["bounds"]),
                          seed=int(nz.get("seed", 0)),
                          distribution=str(nz.get("distribution", "uniform")))
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"noise: {exc}")

    bd = data.get("bounds", TABLE1["bounds"])
    du_bar = float(bd.get("du_bar", 10.0))
    dy_bar = tuple(float(v) for v in bd.get("dy_bar", (10.0,) * 4))
    eta_tilde_bar = float(bd.get("eta_tilde_bar", 1.0))
    if du_bar < 0 or any(b < 0 for b in dy_bar) or eta_tilde_bar < 0:
        errors.append("bounds must be non-negative")

    at = data.get("attack", TABLE1["attack"])
    scenario = zero_scenario()
    if "stealthy_from" in at:
        # preset defaults may leave zero blocks behind; only live ones conflict
        spurious = sorted(
            k for k in set(at) - {"stealthy_from"}
            if not _parse_signal(at[k], f"attack.{k}", []).is_zero)
        prof_block = dict(at["stealthy_from"])
        sign_input = float(prof_block.pop("sign_input", 1.0))
        sign_integral = float(prof_block.pop("sign_integral", 1.0))
        prof = _parse_signal(prof_block, "attack.stealthy_from", errors)
        if spurious:
            errors.append(f"attack: stealthy_from excludes other signal blocks, got {spurious}")
        elif platoon is not None and not errors:
            try:
                scenario = make_stealthy(prof, platoon, sign_input=sign_input,
                                         sign_integral=sign_integral)
            except ValueError as exc:
                errors.append(f"attack.stealthy_from: {exc}")
    else:
        du = _parse_signal(at.get("du", {"kind": "zero"}), "attack.du", errors)
        dys = tuple(_parse_signal(at.get(f"dy{i}", {"kind": "zero"}), f"attack.dy{i}", errors)
                    for i in (1, 2, 3, 4))
        scenario = AttackScenario(du=du, dy=dys)

    sm = data["sim"]
    sim = None
    try:
        sim = SimConfig(
            dt=float(sm["dt"]), horizon=float(sm["horizon"]),
            seed=int(sm.get("seed", nz.get("seed", 0))),
            integrator=str(sm.get("integrator", "euler")),
            epsilon=None if sm.get("epsilon") is None else float(sm["epsilon"]),
            noiseless=bool(sm.get("noiseless", False)),
            crash_stop=bool(sm.get("crash_stop", True)),
            enforce_bounds=bool(sm.get("enforce_bounds", True)),
            dwell_min=None if sm.get("dwell_min") is None else float(sm["dwell_min"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"sim: {exc}")

    out_dir = str(data.get("output", {}).get("out_dir", "runs/out"))
    sweep = dict(data.get("sweep", {}))

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        platoon=platoon, init=init, part=part, a_fil=a_fil, observer=observer,
        e1_init_offset=e1_off, e2_init_offset=e2_off, noise=noise,
        du_bar=du_bar, dy_bar=dy_bar, eta_tilde_bar=eta_tilde_bar,
        scenario=scenario, sim=sim, out_dir=out_dir, sweep=sweep, raw=data,
    )
