"""Physics of one configured two-hop AF link.

Relay gains, the compound and equivalent channels, the coloured noise
covariance, the closed-form Wiener MSE, and QPSK transmission through the
link with Wiener detection.
"""

from dataclasses import dataclass, replace

import numpy as np

from .channel import complex_gaussian
from .linalg import hermitian_inverse, trace_real


class DuplicateRelayError(ValueError):
    pass


def relay_gain(h_row, sigma_x2, ploc):
    """Amplifier gain that uses the full local power ``ploc``.

    ``w = sqrt(ploc / (sigma_x2 * |h|^2 + 1))``; the denominator is the
    average power received on that antenna.
    """
    h_row = np.asarray(h_row)
    energy = float(np.vdot(h_row, h_row).real)
    return float(np.sqrt(ploc / (sigma_x2 * energy + 1.0)))


def relay_gains(h_rows, sigma_x2, ploc):
    """Vectorised ``relay_gain`` over the last axis of ``h_rows``."""
    energy = np.sum(np.abs(h_rows) ** 2, axis=-1)
    return np.sqrt(ploc / (sigma_x2 * energy + 1.0))


@dataclass(frozen=True)
class SelectedLink:
    pairs: tuple
    h_sel: np.ndarray  # (L, Ns)
    g_sel: np.ndarray  # (Nd, L)
    w_diag: np.ndarray  # (L,)
    sigma_x2: float

    @property
    def size(self):
        return len(self.pairs)


@dataclass(frozen=True)
class EquivalentLink:
    """End-to-end view ``z = h_eq x + n_eq`` with ``cov(n_eq) = phi``.

    ``gw`` is G*W, kept so relay noise can be injected when simulating.
    """

    h_eq: np.ndarray  # (Nd, Ns)
    phi: np.ndarray  # (Nd, Nd)
    sigma_x2: float
    gw: np.ndarray  # (Nd, L)

    @property
    def ns(self):
        return self.h_eq.shape[1]

    @property
    def nd(self):
        return self.h_eq.shape[0]


def build_link(channels, pairs, sigma_x2, per_relay_power):
    pairs = tuple(pairs)
    relays = [p.relay for p in pairs]
    if len(set(relays)) != len(relays):
        raise DuplicateRelayError(f"pairs share a relay: {relays}")
    ns = channels.backward.shape[2]
    nd = channels.forward.shape[1]
    if pairs:
        h_sel = np.stack([channels.h(p) for p in pairs])
        g_sel = np.stack([channels.g(p) for p in pairs], axis=1)
    else:
        h_sel = np.zeros((0, ns), dtype=np.complex128)
        g_sel = np.zeros((nd, 0), dtype=np.complex128)
    w_diag = relay_gains(h_sel, sigma_x2, per_relay_power)
    return SelectedLink(pairs, h_sel, g_sel, w_diag, sigma_x2)


def equivalent_link(link):
    gw = link.g_sel * link.w_diag[np.newaxis, :]
    h_eq = gw @ link.h_sel
    phi = gw @ gw.conj().T + np.eye(gw.shape[0])
    return EquivalentLink(h_eq, phi, link.sigma_x2, gw)


def mse_direct(eq, ns, nd, include_beta=False):
    """Closed-form MSE of the Wiener receiver.

    ``Q = sigma_x2 * tr{phi (phi + sigma_x2 h_eq h_eq^H)^-1}``, plus
    ``sigma_x2 * (ns - nd)`` when ``include_beta`` is set.
    """
    if eq.phi.shape != (nd, nd):
        raise ValueError(f"phi has shape {eq.phi.shape}, expected {(nd, nd)}")
    s2 = eq.sigma_x2
    r_inv = hermitian_inverse(eq.phi + s2 * (eq.h_eq @ eq.h_eq.conj().T))
    q = s2 * trace_real(eq.phi @ r_inv)
    if include_beta:
        q += s2 * (ns - nd)
    return q


def wiener_filter(eq):
    """LMMSE filter ``sigma_x2 h_eq^H (sigma_x2 h_eq h_eq^H + phi)^-1``."""
    s2 = eq.sigma_x2
    r_inv = hermitian_inverse(s2 * (eq.h_eq @ eq.h_eq.conj().T) + eq.phi)
    return s2 * eq.h_eq.conj().T @ r_inv


# Gray-coded QPSK: bit 0 -> +1 and bit 1 -> -1 on each quadrature rail.
def qpsk_modulate(bits, amplitude=1.0):
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise ValueError("QPSK needs an even number of bits")
    b = bits.reshape(*bits.shape[:-1], -1, 2)
    sym = ((1 - 2 * b[..., 0]) + 1j * (1 - 2 * b[..., 1])) / np.sqrt(2)
    return amplitude * sym


def qpsk_demodulate(symbols):
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape + (2,), dtype=np.int8)
    out[..., 0] = symbols.real < 0
    out[..., 1] = symbols.imag < 0
    return out.reshape(*symbols.shape[:-1], -1)


def transmit_qpsk(eq, bits, rng, noise_scale=1.0):
    """Send QPSK vectors through the link and detect them.

    ``bits`` has shape (T, 2*Ns) or is a flat sequence whose length is a
    multiple of 2*Ns. Each row becomes one channel use. Relay noise goes
    through G*W, destination noise is added directly; both are unit
    variance times ``noise_scale``. The receiver knows the scaled noise
    statistics: its Wiener filter uses ``noise_scale**2 * phi``, which at
    ``noise_scale == 0`` degenerates to the pseudo-inverse of ``h_eq``.
    Returns ``(z, detected_bits)`` where ``z`` has shape (T, Nd) and
    ``detected_bits`` matches the shape of ``bits``.
    """
    bits = np.asarray(bits)
    per_use = 2 * eq.ns
    if bits.ndim == 1:
        if bits.size == 0 or bits.size % per_use:
            raise ValueError(
                f"bit count {bits.size} is not a positive multiple of 2*Ns = {per_use}"
            )
        rows = bits.reshape(-1, per_use)
    elif bits.ndim == 2 and bits.shape[1] == per_use:
        rows = bits
    else:
        raise ValueError(f"bits shape {bits.shape} does not match 2*Ns = {per_use}")

    t = rows.shape[0]
    x = qpsk_modulate(rows, np.sqrt(eq.sigma_x2))  # (T, Ns)
    n_relay = complex_gaussian(rng, (t, eq.gw.shape[1]))
    n_dest = complex_gaussian(rng, (t, eq.nd))
    z = x @ eq.h_eq.T + noise_scale * (n_relay @ eq.gw.T + n_dest)
    if noise_scale == 0:
        f = np.linalg.pinv(eq.h_eq)
    elif noise_scale == 1:
        f = wiener_filter(eq)
    else:
        f = wiener_filter(replace(eq, phi=noise_scale**2 * eq.phi))
    x_hat = z @ f.T
    detected = qpsk_demodulate(x_hat)
    return z, detected.reshape(bits.shape)
