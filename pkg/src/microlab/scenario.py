"""Declarative scenario files.

A scenario is a YAML mapping; every key is optional.  Mode indices in
scenario files are 1-based (mode 1 is the ground mode of the box).

.. code-block:: yaml

    name: example
    statistics: boson            # or fermion
    hbar: 1.0
    seed: 0
    oracle: false
    region1: {length: 1.0, mass: 1.0, modes: 3, cap: 2, grid_points: 2048}
    region2: {length: 1.0, mass: 1.0, modes: 3, cap: 1, grid_points: 2048}
    state1: {zeta: {number: 4.0, energy: 0.0}}     # or {targets: {...}}
    state2: {zeta: {number: -1.0, energy: 0.1}}
    transfer:                                       # exactly one form
      channels: [{to: 1, from: 1, amplitude: 0.1, phase: 0.0}]
      # amplitudes: [[...], ...]                    # dense M1 x M2 matrix
      # preparation: {hopping: [[...]], strength: 1.0, duration: 1.0, steps: 16, coupling: drive}
    evolution: {times: [0.0, 1.0, 10.0]}
    observables: {family_size: 25, cells: 2}
    lindblad: {model: dephasing, gamma: 0.5, beta: 1.0, dt: 0.01, steps: 200, method: rk4}
    depletion_threshold: 0.05
    tolerances: {mixture_equivalence: 1.0e-10}
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .errors import ScenarioError
from .fock import BOSON, FERMION
from .kernel import max_dim

LINDBLAD_MODELS = ("none", "dephasing", "thermal")
INTEGRATORS = ("rk4", "exact")
COUPLINGS = ("drive", "hamiltonian")


@dataclass(frozen=True)
class RegionConfig:
    length: float = 1.0
    mass: float = 1.0
    modes: int = 3
    cap: int = 1
    grid_points: int = 2048


@dataclass(frozen=True)
class StateConfig:
    zeta: Optional[dict] = None      # {"number": z_N, "energy": z_H}
    targets: Optional[dict] = None   # {"number": <N>, "energy": <H>}


@dataclass(frozen=True)
class PreparationConfig:
    hopping: tuple = ()              # M1 x M2 real matrix of the cross-region operator X
    strength: float = 1.0
    duration: float = 1.0
    steps: int = 16
    coupling: str = "drive"          # drive: X is a driven variable; hamiltonian: X enters H


@dataclass(frozen=True)
class TransferConfig:
    amplitudes: Optional[tuple] = None       # M1 x M2 complex (real part, imag part) pairs
    preparation: Optional[PreparationConfig] = None


@dataclass(frozen=True)
class EvolutionConfig:
    times: tuple = (0.0, 1.0, 10.0)


@dataclass(frozen=True)
class ObservableConfig:
    family_size: int = 25
    cells: int = 2


@dataclass(frozen=True)
class LindbladConfig:
    model: str = "dephasing"
    gamma: float = 0.5
    beta: float = 1.0
    dt: float = 0.01
    steps: int = 200
    method: str = "rk4"


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    statistics: str = BOSON
    hbar: float = 1.0
    seed: int = 0
    oracle: bool = False
    region1: RegionConfig = field(default_factory=lambda: RegionConfig(cap=2))
    region2: RegionConfig = field(default_factory=RegionConfig)
    state1: StateConfig = field(default_factory=lambda: StateConfig(zeta={"number": 4.0, "energy": 0.0}))
    state2: StateConfig = field(default_factory=lambda: StateConfig(zeta={"number": -1.0, "energy": 0.1}))
    transfer: TransferConfig = field(default_factory=TransferConfig)
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    observables: ObservableConfig = field(default_factory=ObservableConfig)
    lindblad: LindbladConfig = field(default_factory=LindbladConfig)
    depletion_threshold: float = 0.05
    tolerances: dict = field(default_factory=dict)
    source: Optional[str] = field(default=None, compare=False)

    def canonical(self):
        """Plain-data form with defaults filled; the source path is excluded."""
        data = asdict(self)
        data.pop("source")
        return data

    @property
    def digest(self):
        return scenario_digest(self)

    @property
    def region_dims(self):
        return (
            region_dimension(self.region1.modes, self.region1.cap, self.statistics),
            region_dimension(self.region2.modes, self.region2.cap, self.statistics),
        )

    @property
    def dimension_estimate(self):
        d1, d2 = self.region_dims
        return d1 * d2

    def transfer_matrix(self):
        """Dense complex ``(M1, M2)`` amplitude matrix (``None`` for preparation)."""
        if self.transfer.amplitudes is None:
            return None
        return [[complex(re, im) for re, im in row] for row in self.transfer.amplitudes]


def scenario_digest(scenario):
    blob = json.dumps(scenario.canonical(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def region_dimension(modes, cap, statistics):
    if statistics == FERMION:
        return sum(math.comb(modes, k) for k in range(min(cap, modes) + 1))
    return math.comb(modes + cap, cap)


# -- parsing ------------------------------------------------------------------

def _line_map(node, prefix="", out=None):
    """Map dotted field paths to 1-based source lines."""
    out = {} if out is None else out
    if isinstance(node, yaml.MappingNode):
        for key, value in node.value:
            path = f"{prefix}.{key.value}" if prefix else str(key.value)
            out[path] = key.start_mark.line + 1
            _line_map(value, path, out)
    elif isinstance(node, yaml.SequenceNode):
        for i, value in enumerate(node.value):
            path = f"{prefix}[{i}]"
            out[path] = value.start_mark.line + 1
            _line_map(value, path, out)
    return out


class _Reader:
    """Typed field access that reports errors with field path and line."""

    def __init__(self, lines, origin):
        self.lines = lines
        self.origin = origin

    def fail(self, path, message):
        line = None
        probe = path
        while probe and line is None:
            line = self.lines.get(probe)
            probe = probe.rsplit(".", 1)[0] if "." in probe else ""
        where = f"{self.origin}" + (f":{line}" if line else "")
        raise ScenarioError(f"{where}: field '{path}': {message}")

    def mapping(self, data, path, allowed):
        if data is None:
            return {}
        if not isinstance(data, dict):
            self.fail(path, "expected a mapping")
        for key in data:
            if key not in allowed:
                full = f"{path}.{key}" if path else str(key)
                self.fail(full, f"unknown key (allowed: {', '.join(sorted(allowed))})")
        return data

    def number(self, data, key, path, default, *, positive=False, nonneg=False):
        full = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(full, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            self.fail(full, "must be finite")
        if positive and not value > 0:
            self.fail(full, f"must be positive, got {value}")
        if nonneg and value < 0:
            self.fail(full, f"must be non-negative, got {value}")
        return value

    def integer(self, data, key, path, default, minimum=None):
        full = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(full, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(full, f"must be >= {minimum}, got {value}")
        return value

    def choice(self, data, key, path, default, options):
        full = f"{path}.{key}" if path else key
        value = data.get(key, default)
        if value not in options:
            self.fail(full, f"expected one of {', '.join(options)}, got {value!r}")
        return value

    def matrix(self, value, path, shape):
        rows, cols = shape
        if not isinstance(value, list) or len(value) != rows:
            self.fail(path, f"expected {rows} rows (one per region-1 mode)")
        out = []
        for i, row in enumerate(value):
            if not isinstance(row, list) or len(row) != cols:
                self.fail(f"{path}[{i}]", f"expected {cols} entries (one per region-2 mode)")
            for j, x in enumerate(row):
                if isinstance(x, bool) or not isinstance(x, (int, float)) or not math.isfinite(x):
                    self.fail(f"{path}[{i}]", f"entry {j + 1} is not a finite number: {x!r}")
            out.append(tuple(float(x) for x in row))
        return tuple(out)


TOP_KEYS = {
    "name", "statistics", "hbar", "seed", "oracle", "region1", "region2", "state1", "state2",
    "transfer", "evolution", "observables", "lindblad", "depletion_threshold", "tolerances",
}


def _region(r, data, path, default_cap):
    data = r.mapping(data, path, {"length", "mass", "modes", "cap", "grid_points"})
    modes = r.integer(data, "modes", path, 3, minimum=1)
    grid = r.integer(data, "grid_points", path, 2048, minimum=64)
    if modes > grid // 4:
        r.fail(f"{path}.modes", f"{modes} modes need at least {4 * modes} grid points")
    return RegionConfig(
        length=r.number(data, "length", path, 1.0, positive=True),
        mass=r.number(data, "mass", path, 1.0, positive=True),
        modes=modes,
        cap=r.integer(data, "cap", path, default_cap, minimum=1),
        grid_points=grid,
    )


def _state(r, data, path, default_zeta):
    data = r.mapping(data, path, {"zeta", "targets"})
    if "zeta" in data and "targets" in data:
        r.fail(path, "give either zeta or targets, not both")
    if "targets" in data:
        t = r.mapping(data["targets"], f"{path}.targets", {"number", "energy"})
        if "number" not in t:
            r.fail(f"{path}.targets", "a target for 'number' is required")
        targets = {"number": r.number(t, "number", f"{path}.targets", None, positive=True)}
        if "energy" in t:
            targets["energy"] = r.number(t, "energy", f"{path}.targets", None, positive=True)
        return StateConfig(targets=targets)
    z = r.mapping(data.get("zeta", default_zeta), f"{path}.zeta", {"number", "energy"})
    return StateConfig(zeta={
        "number": r.number(z, "number", f"{path}.zeta", default_zeta["number"]),
        "energy": r.number(z, "energy", f"{path}.zeta", default_zeta["energy"]),
    })


def _transfer(r, data, path, M1, M2):
    data = r.mapping(data, path, {"channels", "amplitudes", "preparation"})
    forms = [k for k in ("channels", "amplitudes", "preparation") if k in data]
    if len(forms) > 1:
        r.fail(path, f"give exactly one of channels, amplitudes, preparation (got {', '.join(forms)})")
    if not forms:
        data = {"channels": [{"to": 1, "from": 1, "amplitude": 0.1}]}
        forms = ["channels"]
    form = forms[0]
    if form == "preparation":
        p = r.mapping(data["preparation"], f"{path}.preparation",
                      {"hopping", "strength", "duration", "steps", "coupling"})
        if "hopping" not in p:
            r.fail(f"{path}.preparation.hopping", "required")
        hop = r.matrix(p["hopping"], f"{path}.preparation.hopping", (M1, M2))
        if not any(any(row) for row in hop):
            r.fail(f"{path}.preparation.hopping", "all entries are zero")
        return TransferConfig(preparation=PreparationConfig(
            hopping=hop,
            strength=r.number(p, "strength", f"{path}.preparation", 1.0),
            duration=r.number(p, "duration", f"{path}.preparation", 1.0, positive=True),
            steps=r.integer(p, "steps", f"{path}.preparation", 16, minimum=1),
            coupling=r.choice(p, "coupling", f"{path}.preparation", "drive", COUPLINGS),
        ))
    amps = [[(0.0, 0.0)] * M2 for _ in range(M1)]
    if form == "amplitudes":
        real = r.matrix(data["amplitudes"], f"{path}.amplitudes", (M1, M2))
        amps = [[(x, 0.0) for x in row] for row in real]
    else:
        chans = data["channels"]
        if not isinstance(chans, list) or not chans:
            r.fail(f"{path}.channels", "expected a non-empty list")
        for i, ch in enumerate(chans):
            cpath = f"{path}.channels[{i}]"
            ch = r.mapping(ch, cpath, {"to", "from", "amplitude", "phase"})
            for key in ("to", "from", "amplitude"):
                if key not in ch:
                    r.fail(f"{cpath}.{key}", "required")
            h = r.integer(ch, "to", cpath, None)
            n = r.integer(ch, "from", cpath, None)
            if not 1 <= h <= M1:
                r.fail(f"{cpath}.to", f"mode index {h} out of range 1..{M1}")
            if not 1 <= n <= M2:
                r.fail(f"{cpath}.from", f"mode index {n} out of range 1..{M2}")
            amp = r.number(ch, "amplitude", cpath, None)
            phase = r.number(ch, "phase", cpath, 0.0)
            z = amp * complex(math.cos(phase), math.sin(phase))
            re, im = amps[h - 1][n - 1]
            amps[h - 1][n - 1] = (re + z.real, im + z.imag)
    if not any(re or im for row in amps for re, im in row):
        r.fail(f"{path}.{form}", "all transfer amplitudes are zero")
    return TransferConfig(amplitudes=tuple(tuple(row) for row in amps))


def parse_scenario(data, lines=None, origin="<scenario>"):
    """Validate a parsed mapping and fill defaults."""
    from .pipeline import CHECKS

    r = _Reader(lines or {}, origin)
    data = r.mapping(data, "", TOP_KEYS)
    name = data.get("name", "scenario")
    if not isinstance(name, str) or not name:
        r.fail("name", "expected a non-empty string")
    statistics = r.choice(data, "statistics", "", BOSON, (BOSON, FERMION))
    oracle = data.get("oracle", False)
    if not isinstance(oracle, bool):
        r.fail("oracle", "expected true or false")
    seed = r.integer(data, "seed", "", 0, minimum=0)
    region1 = _region(r, data.get("region1"), "region1", 2)
    region2 = _region(r, data.get("region2"), "region2", 1)
    prep = "preparation" in (data.get("transfer") or {})
    state1 = _state(r, data.get("state1"), "state1", {"number": 4.0, "energy": 0.0})
    state2 = _state(r, data.get("state2"), "state2", {"number": -1.0, "energy": 0.1})
    if prep:
        for key, st in (("state1", state1), ("state2", state2)):
            if st.targets is not None:
                r.fail(f"{key}.targets", "a prepared state takes zeta parameters, not targets")
    transfer = _transfer(r, data.get("transfer"), "transfer", region1.modes, region2.modes)

    ev = r.mapping(data.get("evolution"), "evolution", {"times"})
    times = ev.get("times", [0.0, 1.0, 10.0])
    if not isinstance(times, list) or not times:
        r.fail("evolution.times", "expected a non-empty list of times")
    for i, t in enumerate(times):
        if isinstance(t, bool) or not isinstance(t, (int, float)) or not math.isfinite(t) or t < 0:
            r.fail(f"evolution.times[{i}]", f"expected a non-negative number, got {t!r}")
    evolution = EvolutionConfig(tuple(float(t) for t in times))

    ob = r.mapping(data.get("observables"), "observables", {"family_size", "cells"})
    observables = ObservableConfig(
        family_size=r.integer(ob, "family_size", "observables", 25, minimum=0),
        cells=r.integer(ob, "cells", "observables", 2, minimum=1),
    )

    lb = r.mapping(data.get("lindblad"), "lindblad", {"model", "gamma", "beta", "dt", "steps", "method"})
    lindblad = LindbladConfig(
        model=r.choice(lb, "model", "lindblad", "dephasing", LINDBLAD_MODELS),
        gamma=r.number(lb, "gamma", "lindblad", 0.5, nonneg=True),
        beta=r.number(lb, "beta", "lindblad", 1.0, nonneg=True),
        dt=r.number(lb, "dt", "lindblad", 0.01, positive=True),
        steps=r.integer(lb, "steps", "lindblad", 200, minimum=1),
        method=r.choice(lb, "method", "lindblad", "rk4", INTEGRATORS),
    )

    threshold = r.number(data, "depletion_threshold", "", 0.05, positive=True)
    tol = r.mapping(data.get("tolerances"), "tolerances", set(CHECKS))
    tolerances = {k: r.number(tol, k, "tolerances", None, positive=True) for k in sorted(tol)}

    scenario = Scenario(
        name=name, statistics=statistics, hbar=r.number(data, "hbar", "", 1.0, positive=True),
        seed=seed, oracle=oracle, region1=region1, region2=region2, state1=state1, state2=state2,
        transfer=transfer, evolution=evolution, observables=observables, lindblad=lindblad,
        depletion_threshold=threshold, tolerances=tolerances, source=None if origin == "<scenario>" else origin,
    )
    cap = max_dim()
    if scenario.dimension_estimate > cap:
        r.fail("region1.cap", f"Fock dimension {scenario.dimension_estimate} exceeds the cap {cap}")
    return scenario


def load_scenario(path):
    """Read, validate and default-fill a scenario file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: cannot read scenario file ({exc.strerror or exc})") from exc
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{path}:{mark.line + 1}" if mark is not None else str(path)
        raise ScenarioError(f"{where}: parse error: {getattr(exc, 'problem', None) or exc}") from exc
    lines = _line_map(node) if node is not None else {}
    return parse_scenario(data, lines, str(path))
