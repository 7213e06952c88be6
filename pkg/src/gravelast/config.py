"""Run configuration: a sectioned key-value text format.

Sections [mesh], [material], [spec], [solver]; keys are `name = value` with
floats, ints, booleans (true/false), lists like [1, 2.5], quoted strings for
paths and enumerations, the keyword auto, or generator calls like
ball(1.0, 3).  '#' starts a comment.  Every load error names the offending
line; every omitted key gets a documented default recorded in the resolved
configuration.
"""

import math
import os
import re
from dataclasses import dataclass

import numpy as np

from .admissible import A1Spec, A2Spec, validate_spec
from .material import OgdenMaterial, stress_free_c1
from .meshio import MeshFormatError, load_boundary_values, load_mesh
from .minimize import SolverConfig
from .refbody import build_ball_mesh, build_box_mesh

_SECTIONS = ("mesh", "material", "spec", "solver")
_CALL_RE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\((.*)\)$")


class ConfigError(ValueError):
    """A configuration file problem; the message names file and line."""

    def __init__(self, path, line_no, message):
        if line_no:
            super().__init__("%s:%d: %s" % (path, line_no, message))
        else:
            super().__init__("%s: %s" % (path, message))
        self.path = str(path)
        self.line_no = line_no


class _Call:
    def __init__(self, name, args):
        self.name = name
        self.args = args


def _strip_comment(line):
    out = []
    in_quote = False
    for ch in line:
        if ch == '"':
            in_quote = not in_quote
        elif ch == "#" and not in_quote:
            break
        out.append(ch)
    return "".join(out)


def _parse_value(text):
    """Raw text to python value; raises ValueError on malformed input."""
    text = text.strip()
    if not text:
        raise ValueError("empty value")
    if text.startswith('"') and text.endswith('"') and len(text) >= 2:
        return text[1:-1]
    if text == "true":
        return True
    if text == "false":
        return False
    if text == "auto":
        return "auto"
    if text.startswith("["):
        if not text.endswith("]"):
            raise ValueError("unterminated list")
        inner = text[1:-1].strip()
        if not inner:
            return []
        return [float(part) for part in inner.split(",")]
    m = _CALL_RE.match(text)
    if m:
        args_text = m.group(2).strip()
        args = [float(p) for p in args_text.split(",")] if args_text else []
        return _Call(m.group(1), args)
    return float(text)


def _parse_file(path):
    with open(path) as fh:
        raw_lines = fh.read().splitlines()
    sections = {}
    current = None
    for line_no, raw in enumerate(raw_lines, start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(path, line_no, "unterminated section header")
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ConfigError(path, line_no,
                                  "unknown section [%s]; expected one of %s"
                                  % (name, ", ".join(_SECTIONS)))
            current = sections.setdefault(name, {})
            continue
        if "=" not in line:
            raise ConfigError(path, line_no,
                              "expected 'key = value' or a [section] header")
        if current is None:
            raise ConfigError(path, line_no,
                              "key appears before any [section] header")
        key, _, value_text = line.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError(path, line_no, "empty key")
        if key in current:
            raise ConfigError(path, line_no, "duplicate key '%s'" % key)
        try:
            value = _parse_value(value_text)
        except ValueError as exc:
            raise ConfigError(path, line_no,
                              "bad value for '%s': %s" % (key, exc))
        current[key] = (value, line_no)
    return sections


@dataclass
class RunConfig:
    """Fully built run inputs plus the resolved key-value view."""

    path: str
    body: object
    material: OgdenMaterial
    spec: object
    solver: SolverConfig
    seed: int
    voxel_resolution: int
    resolved: dict

    def resolved_text(self):
        """Canonical config text with every default materialized."""
        lines = []
        for section in _SECTIONS:
            lines.append("[%s]" % section)
            for key, value in self.resolved[section].items():
                lines.append("%s = %s" % (key, _format_value(value)))
            lines.append("")
        return "\n".join(lines)


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return value if _CALL_RE.match(value) or value == "auto" \
            else '"%s"' % value
    if isinstance(value, int):
        return "%d" % value
    if isinstance(value, float):
        return "%.17g" % value
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join("%.17g" % v for v in value) + "]"
    raise TypeError("unformattable value %r" % (value,))


class _Section:
    """Typed access to one parsed section with precise error reporting."""

    def __init__(self, path, name, data):
        self.path = path
        self.name = name
        self.data = dict(data)
        self.used = set()

    def take(self, key, default=None, required=False):
        self.used.add(key)
        if key not in self.data:
            if required:
                raise ConfigError(self.path, 0,
                                  "[%s] is missing required key '%s'"
                                  % (self.name, key))
            return default, 0
        value, line = self.data[key]
        return value, line

    def fail(self, line, key, message):
        raise ConfigError(self.path, line, "%s: %s" % (key, message))

    def check_unknown(self):
        for key, (_, line) in self.data.items():
            if key not in self.used:
                raise ConfigError(self.path, line,
                                  "unknown key '%s' in [%s]" % (key, self.name))


def _float_key(sec, key, default, low=None, high=None, low_open=True,
               high_open=True, allow_auto=False):
    value, line = sec.take(key, default)
    if allow_auto and value == "auto":
        return "auto"
    if isinstance(value, bool) or not isinstance(value, float):
        sec.fail(line, key, "expected a number")
    if low is not None and (value <= low if low_open else value < low):
        sec.fail(line, key, "must be %s %g (got %g)"
                 % (">" if low_open else ">=", low, value))
    if high is not None and (value >= high if high_open else value > high):
        sec.fail(line, key, "must be %s %g (got %g)"
                 % ("<" if high_open else "<=", high, value))
    return value


def _int_key(sec, key, default, low):
    value, line = sec.take(key, default)
    if isinstance(value, bool):
        sec.fail(line, key, "expected an integer")
    if isinstance(value, float):
        if value != int(value):
            sec.fail(line, key, "expected an integer (got %g)" % value)
        value = int(value)
    if not isinstance(value, int):
        sec.fail(line, key, "expected an integer")
    if value < low:
        sec.fail(line, key, "must be >= %d (got %d)" % (low, value))
    return value


def _bool_key(sec, key, default):
    value, line = sec.take(key, default)
    if not isinstance(value, bool):
        sec.fail(line, key, "expected true or false")
    return value


def _list_key(sec, key, default):
    value, line = sec.take(key, default)
    if not isinstance(value, list):
        sec.fail(line, key, "expected a list like [1.0, 2.0]")
    return value, line


def load_config(path):
    """Parse, validate, and build every run input from a config file."""
    sections = _parse_file(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    resolved = {name: {} for name in _SECTIONS}

    mesh = _Section(path, "mesh", sections.get("mesh", {}))
    mat = _Section(path, "material", sections.get("material", {}))
    spec_sec = _Section(path, "spec", sections.get("spec", {}))
    solver_sec = _Section(path, "solver", sections.get("solver", {}))

    # --- mesh ---------------------------------------------------------
    source, src_line = mesh.take("source", required=True)
    density = _float_key(mesh, "density", 1.0, low=0.0)
    mesh.check_unknown()
    if isinstance(source, _Call):
        if source.name == "ball":
            if len(source.args) != 2:
                mesh.fail(src_line, "source",
                          "ball(radius, resolution) takes 2 arguments")
            radius, res = source.args
            if res != int(res) or res < 1:
                mesh.fail(src_line, "source",
                          "ball resolution must be a positive integer")
            try:
                body = build_ball_mesh(radius, int(res), density)
            except ValueError as exc:
                mesh.fail(src_line, "source", str(exc))
            resolved["mesh"]["source"] = "ball(%.17g, %d)" % (radius, int(res))
        elif source.name == "box":
            if len(source.args) != 6:
                mesh.fail(src_line, "source",
                          "box(ex, ey, ez, nx, ny, nz) takes 6 arguments")
            ex, ey, ez, nx, ny, nz = source.args
            for n in (nx, ny, nz):
                if n != int(n) or n < 1:
                    mesh.fail(src_line, "source",
                              "box subdivisions must be positive integers")
            try:
                body = build_box_mesh((ex, ey, ez),
                                      (int(nx), int(ny), int(nz)), density)
            except ValueError as exc:
                mesh.fail(src_line, "source", str(exc))
            resolved["mesh"]["source"] = "box(%.17g, %.17g, %.17g, %d, %d, %d)" \
                % (ex, ey, ez, int(nx), int(ny), int(nz))
        else:
            mesh.fail(src_line, "source",
                      "unknown generator '%s' (expected ball or box)"
                      % source.name)
    elif isinstance(source, str):
        mesh_path = source if os.path.isabs(source) \
            else os.path.join(base_dir, source)
        try:
            body = load_mesh(mesh_path)
        except OSError as exc:
            mesh.fail(src_line, "source", "cannot read mesh: %s" % exc)
        except MeshFormatError as exc:
            mesh.fail(src_line, "source", str(exc))
        resolved["mesh"]["source"] = os.path.abspath(mesh_path)
    else:
        mesh.fail(src_line, "source",
                  "expected ball(...), box(...), or a quoted mesh path")
    resolved["mesh"]["density"] = density

    # --- material -----------------------------------------------------
    a_coeffs, a_line = _list_key(mat, "a", [1.0])
    gammas, g_line = _list_key(mat, "gamma", [8.0])
    b_coeffs, b_line = _list_key(mat, "b", [1.0])
    deltas, d_line = _list_key(mat, "delta", [2.0])
    if len(a_coeffs) != len(gammas):
        mat.fail(g_line or a_line, "gamma",
                 "needs one exponent per coefficient in 'a' (%d vs %d)"
                 % (len(gammas), len(a_coeffs)))
    if len(b_coeffs) != len(deltas):
        mat.fail(d_line or b_line, "delta",
                 "needs one exponent per coefficient in 'b' (%d vs %d)"
                 % (len(deltas), len(b_coeffs)))
    barrier_s = _float_key(mat, "barrier_s", 9.0, low=0.0)
    barrier_c1 = _float_key(mat, "barrier_c1", "auto", low=0.0, low_open=False,
                            allow_auto=True)
    kappa = _float_key(mat, "kappa", 0.0, low=0.0, low_open=False)
    mat.check_unknown()

    terms_a = list(zip(a_coeffs, gammas))
    terms_b = list(zip(b_coeffs, deltas))
    if barrier_c1 == "auto":
        if not terms_a and not terms_b:
            line = mat.take("barrier_c1")[1]
            mat.fail(line, "barrier_c1",
                     "auto needs at least one a- or b-term to balance")
        barrier_c1 = stress_free_c1(terms_a, terms_b, barrier_s)
    try:
        material = OgdenMaterial(terms_a, terms_b, gamma_c1=barrier_c1,
                                 gamma_s=barrier_s, kappa=kappa)
    except ValueError as exc:
        raise ConfigError(path, 0, "material: %s" % exc)
    resolved["material"]["a"] = a_coeffs
    resolved["material"]["gamma"] = gammas
    resolved["material"]["b"] = b_coeffs
    resolved["material"]["delta"] = deltas
    resolved["material"]["barrier_c1"] = barrier_c1
    resolved["material"]["barrier_s"] = barrier_s
    resolved["material"]["kappa"] = kappa

    # --- spec ---------------------------------------------------------
    space, space_line = spec_sec.take("space", "A1")
    if space not in ("A1", "A2"):
        spec_sec.fail(space_line, "space",
                      'must be "A1" or "A2" (got %r)' % (space,))
    if space == "A1":
        com_target, com_line = spec_sec.take("com_target", "auto")
        spec_sec.check_unknown()
        if com_target == "auto":
            target = body.reference_weighted_com()
        else:
            if not isinstance(com_target, list) or len(com_target) != 3:
                spec_sec.fail(com_line, "com_target",
                              "expected a 3-vector or auto")
            target = np.array(com_target)
        spec = A1Spec(target)
        resolved["spec"]["space"] = "A1"
        resolved["spec"]["com_target"] = target
    else:
        bfile, bf_line = spec_sec.take("boundary_file", required=True)
        spec_sec.check_unknown()
        if not isinstance(bfile, str) or bfile == "auto":
            spec_sec.fail(bf_line, "boundary_file", "expected a quoted path")
        bpath = bfile if os.path.isabs(bfile) else os.path.join(base_dir, bfile)
        try:
            nodes, values = load_boundary_values(bpath)
        except OSError as exc:
            spec_sec.fail(bf_line, "boundary_file", "cannot read: %s" % exc)
        except MeshFormatError as exc:
            spec_sec.fail(bf_line, "boundary_file", str(exc))
        if nodes.min() < 0 or nodes.max() >= body.n_nodes:
            spec_sec.fail(bf_line, "boundary_file",
                          "node index out of range for this mesh")
        try:
            spec = A2Spec(nodes, values)
        except ValueError as exc:
            spec_sec.fail(bf_line, "boundary_file", str(exc))
        issues = validate_spec(body, spec)
        if issues:
            spec_sec.fail(bf_line, "boundary_file", "; ".join(issues))
        resolved["spec"]["space"] = "A2"
        resolved["spec"]["boundary_file"] = os.path.abspath(bpath)

    # --- solver -------------------------------------------------------
    grad_tol = _float_key(solver_sec, "grad_tol", "auto", low=0.0,
                          allow_auto=True)
    max_iter = _int_key(solver_sec, "max_iter", 500, low=0)
    ls_shrink = _float_key(solver_sec, "ls_shrink", 0.5, low=0.0, high=1.0)
    ls_armijo = _float_key(solver_sec, "ls_armijo", 1e-4, low=0.0, high=1.0)
    memory = _int_key(solver_sec, "memory", 10, low=1)
    theta = _float_key(solver_sec, "theta", 0.0, low=0.0, low_open=False,
                       high=1.0)
    G = _float_key(solver_sec, "G", 1.0, low=0.0, low_open=False)
    softening = _float_key(solver_sec, "softening", 0.0, low=0.0,
                           low_open=False)
    deterministic = _bool_key(solver_sec, "deterministic", True)
    seed = _int_key(solver_sec, "seed", 0, low=0)
    voxel_resolution = _int_key(solver_sec, "voxel_resolution", 128, low=8)
    solver_sec.check_unknown()

    solver = SolverConfig(
        grad_tol=None if grad_tol == "auto" else grad_tol,
        max_iter=max_iter,
        ls_shrink=ls_shrink,
        ls_armijo=ls_armijo,
        memory=memory,
        theta=theta,
        G=G,
        softening=softening,
        deterministic=deterministic,
    )
    resolved["solver"]["grad_tol"] = "auto" if grad_tol == "auto" else grad_tol
    resolved["solver"]["max_iter"] = max_iter
    resolved["solver"]["ls_shrink"] = ls_shrink
    resolved["solver"]["ls_armijo"] = ls_armijo
    resolved["solver"]["memory"] = memory
    resolved["solver"]["theta"] = theta
    resolved["solver"]["G"] = G
    resolved["solver"]["softening"] = softening
    resolved["solver"]["deterministic"] = deterministic
    resolved["solver"]["seed"] = seed
    resolved["solver"]["voxel_resolution"] = voxel_resolution

    return RunConfig(
        path=os.path.abspath(path),
        body=body,
        material=material,
        spec=spec,
        solver=solver,
        seed=seed,
        voxel_resolution=voxel_resolution,
        resolved=resolved,
    )
