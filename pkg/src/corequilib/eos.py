"""Equation of state layer: the pressure law and its derived potentials.

Every other component talks to an EOS through four maps:

* ``pressure``           p = f(rho)
* ``internal_energy``    A(rho) = rho * int_0^rho f(t)/t^2 dt
* ``enthalpy``           A'(rho) = int_0^rho f(t)/t^2 dt + f(rho)/rho
* ``enthalpy_inverse``   rho = (A')^(-1)(h), with rho = 0 for h <= 0

``Polytrope`` (f = k*rho**gamma) implements all four in closed form and is the
first-class law. ``TabulatedEos`` accepts a monotone sample table of f and
builds the integral maps by adaptive quadrature; the forward maps extrapolate
past the table with the power laws fitted at its ends, while the inverse
refuses enthalpies above the sampled range, where inversion would be pure
extrapolation.

The cutoff branch of ``enthalpy_inverse`` (zero density at non-positive
enthalpy) is what turns the equilibrium relation into a free-boundary problem:
the gas support is exactly the region where the total potential plus the
multiplier is positive.
"""

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator


class EosDomainError(ValueError):
    """An EOS map was evaluated at a negative density."""


class EosRangeError(ValueError):
    """Inversion requested above the sampled enthalpy range."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature failed to converge while building a table EOS."""


def _prepared(s):
    """Return (array, was_scalar) with the negative-density check applied."""
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0.0):
        raise EosDomainError("density must be non-negative")
    return arr, arr.ndim == 0


def _ret(values, scalar):
    return float(values) if scalar else values


class Polytrope:
    """Power-law equation of state p = k * rho**gamma.

    Parameters
    ----------
    k : float
        Pressure coefficient, k > 0.
    gamma : float
        Adiabatic exponent.  Must exceed 4/3; below that the gas cannot hold
        itself against its own gravity and the variational problem the solver
        targets has no minimizer.
    """

    kind = "polytrope"

    def __init__(self, k, gamma):
        if not k > 0.0:
            raise ValueError("polytrope coefficient k must be positive")
        if not gamma > 4.0 / 3.0:
            raise ValueError(
                "polytrope exponent gamma must exceed 4/3, got %g" % gamma
            )
        self.k = float(k)
        self.gamma = float(gamma)

    def __repr__(self):
        return "Polytrope(k=%g, gamma=%g)" % (self.k, self.gamma)

    def pressure(self, s):
        s, scalar = _prepared(s)
        return _ret(self.k * s**self.gamma, scalar)

    def internal_energy(self, s):
        """A(s) = k*s**gamma/(gamma-1)."""
        s, scalar = _prepared(s)
        return _ret(self.k * s**self.gamma / (self.gamma - 1.0), scalar)

    def enthalpy(self, s):
        """A'(s) = gamma*k*s**(gamma-1)/(gamma-1)."""
        s, scalar = _prepared(s)
        g = self.gamma
        return _ret(g * self.k * s ** (g - 1.0) / (g - 1.0), scalar)

    def enthalpy_inverse(self, h):
        """Density with enthalpy h, or 0 where h <= 0."""
        arr = np.asarray(h, dtype=float)
        scalar = arr.ndim == 0
        g = self.gamma
        scaled = np.maximum(arr, 0.0) * ((g - 1.0) / (g * self.k))
        return _ret(scaled ** (1.0 / (g - 1.0)), scalar)

    def growth_conditions_known(self):
        """Whether the fast-growth conditions behind the run-off regime hold.

        A power law with gamma > 4/3 always satisfies them, so the mass
        run-off verdict is physically meaningful for this EOS.
        """
        return True


class TabulatedEos:
    """EOS built from a monotone sample table of the pressure law.

    Parameters
    ----------
    s_table, f_table : array_like
        Strictly increasing densities (all positive) and the corresponding
        strictly increasing positive pressures.  At least four samples.

    Notes
    -----
    The admissibility conditions on f (vanishing at zero faster than
    s**(4/3), outgrowing s**(4/3) at large density) can only be checked at
    the table endpoints: the fitted end slopes must both exceed 4/3.  That
    is a necessary, not sufficient, validation and is documented as such.

    Inside the table f is interpolated monotonically in log-log space, so a
    power-law table reproduces the corresponding ``Polytrope`` to quadrature
    accuracy.
    """

    kind = "tabulated-generic"

    #: relative tolerance for the quadrature of f(t)/t^2
    quad_rtol = 1e-12

    def __init__(self, s_table, f_table):
        s = np.asarray(s_table, dtype=float)
        f = np.asarray(f_table, dtype=float)
        if s.ndim != 1 or s.shape != f.shape:
            raise ValueError("s_table and f_table must be 1-d and equal length")
        if s.size < 4:
            raise ValueError("need at least 4 table samples")
        if not (s[0] > 0.0 and np.all(np.diff(s) > 0.0)):
            raise ValueError("s_table must be positive and strictly increasing")
        if not (f[0] > 0.0 and np.all(np.diff(f) > 0.0)):
            raise ValueError("f_table must be positive and strictly increasing")

        # End-slope fits double as the admissibility check: g = f*s**(-4/3)
        # must fall toward zero at the bottom and rise at the top, which is
        # exactly "fitted exponent > 4/3" at both ends.
        self._beta_lo = np.log(f[1] / f[0]) / np.log(s[1] / s[0])
        self._beta_hi = np.log(f[-1] / f[-2]) / np.log(s[-1] / s[-2])
        if not self._beta_lo > 4.0 / 3.0:
            raise ValueError(
                "table slope near zero density is %.3f, must exceed 4/3"
                % self._beta_lo
            )
        if not self._beta_hi > 4.0 / 3.0:
            raise ValueError(
                "table slope at high density is %.3f, must exceed 4/3"
                % self._beta_hi
            )
        self._c_lo = f[0] / s[0] ** self._beta_lo
        self._c_hi = f[-1] / s[-1] ** self._beta_hi
        self.s_min = float(s[0])
        self.s_max = float(s[-1])

        u = np.log(s)
        self._logf = PchipInterpolator(u, np.log(f))
        self._build_integral_tables(u)

    # -- construction helpers -------------------------------------------------

    def _f_of_u(self, u):
        return np.exp(self._logf(u))

    def _build_integral_tables(self, u_samples):
        """Tabulate I(s) = int_0^s f(t)/t^2 dt on a dense log grid.

        With t = e^u the integrand becomes f(e^u)*e^(-u), which is smooth,
        so piecewise adaptive quadrature between neighboring grid points
        converges immediately.  The head of the integral (0, s_min] is the
        fitted power law, integrated in closed form.
        """
        n_fine = max(801, 60 * u_samples.size)
        u_fine = np.union1d(np.linspace(u_samples[0], u_samples[-1], n_fine),
                            u_samples)

        def integrand(u):
            return np.exp(self._logf(u) - u)

        head = self._c_lo * self.s_min ** (self._beta_lo - 1.0) / (
            self._beta_lo - 1.0
        )
        pieces = np.empty(u_fine.size)
        pieces[0] = head
        for i in range(1, u_fine.size):
            val, err = quad(integrand, u_fine[i - 1], u_fine[i],
                            epsabs=0.0, epsrel=self.quad_rtol, limit=200)
            if not np.isfinite(val) or err > 1e-8 * max(abs(val), head):
                raise QuadratureError(
                    "quadrature of f(t)/t^2 did not converge on "
                    "[%g, %g]" % (np.exp(u_fine[i - 1]), np.exp(u_fine[i]))
                )
            pieces[i] = val
        i_fine = np.cumsum(pieces)

        self._I = PchipInterpolator(u_fine, i_fine)
        self._dI = self._I.derivative()
        h_fine = i_fine + integrand(u_fine)  # I + f/s on the fine grid
        self.h_min = float(h_fine[0])
        self.h_max = float(h_fine[-1])
        self._u_min, self._u_max = float(u_fine[0]), float(u_fine[-1])
        self._inv_seed = PchipInterpolator(np.log(h_fine), u_fine)

    # -- the four maps --------------------------------------------------------

    def pressure(self, s):
        s, scalar = _prepared(s)
        out = np.zeros_like(s)
        lo = (s > 0.0) & (s < self.s_min)
        mid = (s >= self.s_min) & (s <= self.s_max)
        hi = s > self.s_max
        out[lo] = self._c_lo * s[lo] ** self._beta_lo
        out[mid] = self._f_of_u(np.log(s[mid]))
        out[hi] = self._c_hi * s[hi] ** self._beta_hi
        return _ret(out, scalar)

    def _integral(self, s):
        """I(s) on s > 0, with power-law tails outside the table."""
        out = np.empty_like(s)
        lo = s < self.s_min
        mid = (s >= self.s_min) & (s <= self.s_max)
        hi = s > self.s_max
        b = self._beta_lo
        out[lo] = self._c_lo * s[lo] ** (b - 1.0) / (b - 1.0)
        out[mid] = self._I(np.log(s[mid]))
        b = self._beta_hi
        out[hi] = self._I(self._u_max) + self._c_hi * (
            s[hi] ** (b - 1.0) - self.s_max ** (b - 1.0)
        ) / (b - 1.0)
        return out

    def internal_energy(self, s):
        s, scalar = _prepared(s)
        out = np.zeros_like(s)
        pos = s > 0.0
        out[pos] = s[pos] * self._integral(s[pos])
        return _ret(out, scalar)

    def enthalpy(self, s):
        s, scalar = _prepared(s)
        out = np.zeros_like(s)
        pos = s > 0.0
        sp = s[pos]
        out[pos] = self._integral(sp) + self.pressure(sp) / sp
        return _ret(out, scalar)

    def _enthalpy_slope_u(self, u):
        """d(A')/du at u = log s (used by the Newton refinement)."""
        fs = np.exp(self._logf(u) - u)  # f/s
        return self._dI(u) + fs * (self._logf.derivative()(u) - 1.0)

    def enthalpy_inverse(self, h):
        arr = np.asarray(h, dtype=float)
        scalar = arr.ndim == 0
        work = np.atleast_1d(arr).astype(float)
        out = np.zeros_like(work)

        if np.any(work > self.h_max * (1.0 + 1e-12)):
            raise EosRangeError(
                "enthalpy %g above the sampled range (max %g)"
                % (float(np.max(work)), self.h_max)
            )

        lo = (work > 0.0) & (work <= self.h_min)
        b = self._beta_lo
        out[lo] = ((b - 1.0) * work[lo] / (self._c_lo * b)) ** (1.0 / (b - 1.0))

        mid = work > self.h_min
        if np.any(mid):
            out[mid] = self._invert_in_table(work[mid])

        if scalar:
            return float(out[0])
        return out.reshape(arr.shape)

    def _invert_in_table(self, h):
        """Vector Newton on A'(e^u) = h, seeded by the inverse interpolant."""
        target = np.minimum(h, self.h_max)
        u = np.clip(self._inv_seed(np.log(target)), self._u_min, self._u_max)
        tol = 1e-13 * np.maximum(1.0, target)
        for _ in range(60):
            s = np.exp(u)
            val = self._I(u) + np.exp(self._logf(u) - u) - target
            if np.all(np.abs(val) <= tol):
                break
            slope = self._enthalpy_slope_u(u) / s  # dA'/ds
            u = np.clip(u - val / (slope * s), self._u_min, self._u_max)
        return np.exp(u)

    def growth_conditions_known(self):
        """Finite samples cannot settle the limits behind the run-off regime."""
        return None


def make_eos(kind, **kwargs):
    """Factory used by the config layer.

    ``kind`` is either ``"polytrope"`` (needs k, gamma) or
    ``"tabulated-generic"`` (needs s, f sample arrays).
    """
    if kind == "polytrope":
        return Polytrope(kwargs["k"], kwargs["gamma"])
    if kind == "tabulated-generic":
        return TabulatedEos(kwargs["s"], kwargs["f"])
    raise ValueError("unknown eos kind %r" % (kind,))
