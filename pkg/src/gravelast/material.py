"""Ogden-class polyconvex stored energies and their analytic derivatives.

The stored energy per unit mass is

    w(F) = sum_i a_i (tr C)^(gamma_i/2) + sum_j b_j (tr Cof C)^(delta_j/2)
           + Gamma(det F) + h,          C = F^T F,

with the volumetric barrier Gamma(z) = c1 * z^(-s) + kappa * (z - 1)^2 and
h chosen so that w(identity) = 0.  States with det F <= 0 are infeasible and
map to +inf energy rather than an exception, so line searches can reject them.
"""

import math
from dataclasses import dataclass

import numpy as np


class InfeasibleStateError(ValueError):
    """A derivative was requested at a state with det F <= 0."""


def determinant(F):
    """Determinant of F, batched over leading axes."""
    F = np.asarray(F, dtype=np.float64)
    return np.linalg.det(F)


def cofactor(F):
    """Cofactor matrix by the 2x2-minor formula, valid for singular F too.

    Row i of Cof F is the cross product of the other two rows of F, so
    Cof(F) F^T = det(F) I holds identically.
    """
    F = np.asarray(F, dtype=np.float64)
    cof = np.empty_like(F)
    cof[..., 0, :] = np.cross(F[..., 1, :], F[..., 2, :])
    cof[..., 1, :] = np.cross(F[..., 2, :], F[..., 0, :])
    cof[..., 2, :] = np.cross(F[..., 0, :], F[..., 1, :])
    return cof


def _as_terms(terms, kind):
    out = []
    for pair in terms:
        coeff, expo = pair
        expo = float(expo)
        if expo < 1.0:
            raise ValueError("%s exponents must be >= 1, got %g" % (kind, expo))
        coeff = np.asarray(coeff, dtype=np.float64)
        if coeff.ndim == 0:
            coeff = float(coeff)
            if coeff <= 0:
                raise ValueError("%s coefficients must be positive" % kind)
        else:
            if coeff.ndim != 1 or (coeff <= 0).any():
                raise ValueError(
                    "%s per-element coefficients must be a positive 1-d array"
                    % kind)
        out.append((coeff, expo))
    return out


class OgdenMaterial:
    """Immutable Ogden material; all evaluation operations are pure.

    Coefficients may be scalars or per-element 1-d arrays (all terms must
    then agree on the element count and only batch evaluation is available).
    ``gamma_c1 = 0`` disables the volumetric barrier; validators flag it, but
    evaluation still works, which is what the gravity-only test isolations
    need.
    """

    def __init__(self, terms_a=(), terms_b=(), gamma_c1=1.0, gamma_s=2.0,
                 kappa=0.0):
        self.terms_a = _as_terms(terms_a, "gamma")
        self.terms_b = _as_terms(terms_b, "delta")
        self.gamma_c1 = float(gamma_c1)
        self.gamma_s = float(gamma_s)
        self.kappa = float(kappa)
        if self.gamma_c1 < 0:
            raise ValueError("barrier coefficient gamma_c1 must be >= 0")
        if self.gamma_s <= 0:
            raise ValueError("barrier exponent gamma_s must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be >= 0")

        sizes = {np.size(c) for c, _ in self.terms_a + self.terms_b
                 if not np.isscalar(c)}
        if len(sizes) > 1:
            raise ValueError("per-element coefficient arrays differ in length")
        self.per_element = sizes.pop() if sizes else None

        self.h_offset = normalize_offset(self)

    @classmethod
    def stress_free(cls, terms_a, terms_b, gamma_s, kappa=0.0):
        """Material whose reference state carries no stress.

        The barrier coefficient is the unique c1 > 0 with dw/dF(I) = 0; the
        kappa term cannot do this job since its derivative vanishes at
        det F = 1.
        """
        c1 = stress_free_c1(terms_a, terms_b, gamma_s)
        return cls(terms_a, terms_b, gamma_c1=c1, gamma_s=gamma_s, kappa=kappa)

    def barrier(self, z):
        """Gamma(z) for z > 0 (elementwise)."""
        z = np.asarray(z, dtype=np.float64)
        val = self.gamma_c1 * z ** (-self.gamma_s)
        if self.kappa:
            val = val + self.kappa * (z - 1.0) ** 2
        return val

    def barrier_prime(self, z):
        """Gamma'(z) for z > 0 (elementwise)."""
        z = np.asarray(z, dtype=np.float64)
        val = -self.gamma_s * self.gamma_c1 * z ** (-self.gamma_s - 1.0)
        if self.kappa:
            val = val + 2.0 * self.kappa * (z - 1.0)
        return val

    def _require_scalar_terms(self):
        if self.per_element is not None:
            raise ValueError(
                "per-element coefficients require batch evaluation over all "
                "elements")


def stress_free_c1(terms_a, terms_b, gamma_s):
    """Barrier coefficient making the reference configuration stress-free.

    At F = I the isochoric terms pull with a_i*gamma_i*3^(gamma_i/2-1) plus
    2*b_j*delta_j*3^(delta_j/2-1) and the barrier pushes with -s*c1; setting
    the sum to zero fixes c1.
    """
    s = float(gamma_s)
    if s <= 0:
        raise ValueError("barrier exponent must be positive")
    pull = 0.0
    for a, g in terms_a:
        pull += a * g * 3.0 ** (g / 2.0 - 1.0)
    for b, d in terms_b:
        pull += 2.0 * b * d * 3.0 ** (d / 2.0 - 1.0)
    c1 = pull / s
    if np.ndim(c1) == 0 and c1 <= 0:
        raise ValueError("stress-free construction needs at least one term")
    return c1


def normalize_offset(material):
    """Offset h with w(identity) = 0: minus the unnormalized energy at I."""
    total = material.barrier(1.0)
    for a, g in material.terms_a:
        total = total + a * 3.0 ** (g / 2.0)
    for b, d in material.terms_b:
        total = total + b * 3.0 ** (d / 2.0)
    return -total


def energy_density(material, F):
    """Stored energy per unit mass at one deformation gradient.

    Returns math.inf when det F <= 0 (infeasible state signal).
    """
    material._require_scalar_terms()
    F = np.asarray(F, dtype=np.float64)
    det = float(np.linalg.det(F))
    if det <= 0.0 or not np.isfinite(det):
        return math.inf
    tr_c = float((F * F).sum())
    w = float(material.barrier(det)) + float(material.h_offset)
    for a, g in material.terms_a:
        w += a * tr_c ** (g / 2.0)
    if material.terms_b:
        h = cofactor(F)
        tr_cof = float((h * h).sum())
        for b, d in material.terms_b:
            w += b * tr_cof ** (d / 2.0)
    return w


def energy_density_batch(material, Fs):
    """Stored energy per unit mass for a stack of gradients, (E,).

    Entries with det F <= 0 come back as +inf.
    """
    Fs = np.asarray(Fs, dtype=np.float64)
    det = np.linalg.det(Fs)
    feasible = det > 0.0
    safe_det = np.where(feasible, det, 1.0)

    w = material.barrier(safe_det) + material.h_offset
    tr_c = (Fs * Fs).sum(axis=(-2, -1))
    for a, g in material.terms_a:
        w = w + a * tr_c ** (g / 2.0)
    if material.terms_b:
        h = cofactor(Fs)
        tr_cof = (h * h).sum(axis=(-2, -1))
        for b, d in material.terms_b:
            w = w + b * tr_cof ** (d / 2.0)
    return np.where(feasible, w, math.inf)


def dw_dF(material, F):
    """Analytic derivative of the stored energy at one gradient."""
    material._require_scalar_terms()
    F = np.asarray(F, dtype=np.float64)
    out = dw_dF_batch(material, F[None, :, :])
    return out[0]


def dw_dF_batch(material, Fs):
    """Analytic derivative of the stored energy for a stack of gradients.

    Uses d(tr C)^(g/2)/dF = g (tr C)^(g/2-1) F,
    d(tr Cof C)/dF = 2 F^-T (|H|^2 I - H^T H) with H = Cof F, and
    d Gamma(det F)/dF = Gamma'(det F) Cof F.
    """
    Fs = np.asarray(Fs, dtype=np.float64)
    det = np.linalg.det(Fs)
    if (det <= 0.0).any() or not np.isfinite(det).all():
        bad = int(np.flatnonzero(~(det > 0.0))[0])
        raise InfeasibleStateError(
            "det F = %g <= 0 at element %d" % (det.flat[bad], bad))

    out = np.zeros_like(Fs)
    tr_c = (Fs * Fs).sum(axis=(-2, -1))
    for a, g in material.terms_a:
        coeff = np.asarray(a) * g * tr_c ** (g / 2.0 - 1.0)
        out += coeff[..., None, None] * Fs

    h = cofactor(Fs)
    if material.terms_b:
        tr_cof = (h * h).sum(axis=(-2, -1))
        finv_t = h / det[..., None, None]
        hth = np.swapaxes(h, -2, -1) @ h
        core = tr_cof[..., None, None] * np.eye(3) - hth
        base = finv_t @ core
        for b, d in material.terms_b:
            coeff = np.asarray(b) * d * tr_cof ** (d / 2.0 - 1.0)
            out += coeff[..., None, None] * base

    out += material.barrier_prime(det)[..., None, None] * h
    return out


def piola_stress(material, rho_ref, F):
    """First Piola-Kirchhoff stress: rho_ref times dw/dF."""
    F = np.asarray(F, dtype=np.float64)
    if F.ndim == 2:
        return rho_ref * dw_dF(material, F)
    return np.asarray(rho_ref)[..., None, None] * dw_dF_batch(material, F)


@dataclass
class CoercivityExponents:
    """Growth exponents controlling admissibility of a material."""

    p: float
    q: float
    s: float
    r: float

    @classmethod
    def from_material(cls, material):
        p = max((g for _, g in material.terms_a), default=0.0)
        q = max((d for _, d in material.terms_b), default=0.0)
        s = material.gamma_s
        r = q * (1.0 + s) / (q + s) if q + s > 0 else 0.0
        return cls(p=p, q=q, s=s, r=r)


@dataclass
class ExponentReport:
    """Accept/reject outcome of the admissibility exponent conditions."""

    space: str
    accepted: bool
    p: float
    q: float
    s: float
    r: float
    failures: list
    conditions: list


def validate_exponents(material, space):
    """Check the growth-exponent conditions for the requested space.

    Space "A1" (center-of-mass constrained) requires p > 6, q >= p/(p-1),
    and s > 2p/(p-6).  Space "A2" (boundary-pinned) requires p > 3, q > 3,
    and s > 2q/(q-3), equivalently r = q(1+s)/(q+s) > 3.
    """
    if space not in ("A1", "A2"):
        raise ValueError("space must be 'A1' or 'A2', got %r" % (space,))
    ex = CoercivityExponents.from_material(material)
    p, q, s, r = ex.p, ex.q, ex.s, ex.r
    failures = []
    conditions = []

    def record(name, ok, detail):
        conditions.append((name, bool(ok), detail))
        if not ok:
            failures.append("%s failed: %s" % (name, detail))

    if material.gamma_c1 <= 0:
        record("barrier coefficient c1 > 0", False,
               "c1 = %g disables the volume barrier" % material.gamma_c1)

    if space == "A1":
        record("p > 6", p > 6.0, "p = %g" % p)
        if p > 1.0:
            record("q >= p/(p-1)", q >= p / (p - 1.0),
                   "q = %g, p/(p-1) = %g" % (q, p / (p - 1.0)))
        else:
            record("q >= p/(p-1)", False, "p = %g makes the bound vacuous" % p)
        if p > 6.0:
            record("s > 2p/(p-6)", s > 2.0 * p / (p - 6.0),
                   "s = %g, 2p/(p-6) = %g" % (s, 2.0 * p / (p - 6.0)))
        else:
            record("s > 2p/(p-6)", False, "requires p > 6 first")
    else:
        record("p > 3", p > 3.0, "p = %g" % p)
        record("q > 3", q > 3.0, "q = %g" % q)
        if q > 3.0:
            record("s > 2q/(q-3)", s > 2.0 * q / (q - 3.0),
                   "s = %g, 2q/(q-3) = %g" % (s, 2.0 * q / (q - 3.0)))
        else:
            record("s > 2q/(q-3)", False, "requires q > 3 first")
        record("r > 3", r > 3.0, "r = q(1+s)/(q+s) = %g" % r)

    return ExponentReport(
        space=space,
        accepted=not failures,
        p=p, q=q, s=s, r=r,
        failures=failures,
        conditions=conditions,
    )


@dataclass
class W4Report:
    """Empirical bounds for the stress-control and barrier-slope conditions."""

    empirical_K: float
    empirical_c2: float
    sample_count: int
    min_w: float


def check_w4(material, sample_count=200, seed=0):
    """Sample |dw/dF F^T| / (w + 1) and the barrier slope ratio.

    Random gradients are drawn with det F log-uniform in [1e-3, 1e3].  The
    reported empirical_c2 is the max of |Gamma'(z)| z / (1 + Gamma(z)) on a
    log grid; for the pure barrier it stays below s.
    """
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    material._require_scalar_terms()
    rng = np.random.default_rng(seed)

    worst = 0.0
    min_w = math.inf
    n = 0
    while n < sample_count:
        F = rng.standard_normal((3, 3))
        d = np.linalg.det(F)
        if abs(d) < 1e-8:
            continue
        if d < 0:
            F[0] = -F[0]
            d = -d
        target = 10.0 ** rng.uniform(-3.0, 3.0)
        F *= (target / d) ** (1.0 / 3.0)
        n += 1
        w = energy_density(material, F)
        min_w = min(min_w, w)
        kirchhoff = dw_dF(material, F) @ F.T
        ratio = float(np.linalg.norm(kirchhoff)) / max(w + 1.0, 1e-300)
        worst = max(worst, ratio)

    zs = np.logspace(-3.0, 3.0, 601)
    slope = np.abs(material.barrier_prime(zs)) * zs / (1.0 + material.barrier(zs))
    return W4Report(
        empirical_K=worst,
        empirical_c2=float(slope.max()),
        sample_count=sample_count,
        min_w=float(min_w),
    )
