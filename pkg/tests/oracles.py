"""Reference values computed independently of the package code.

Nothing here imports roofbench: these are the fixed points the tests
compare against.
"""

import numpy as np

SQ3 = np.sqrt(3.0)

# f = x^3 on the unit circle: the lower tritangent plane z = (3/4) x - 1/4
# touches the graph at angles pi, +-pi/3 (each contact value equals the plane).
TRITANGENT_POINTS = np.array([[-1.0, 0.0], [0.5, -SQ3 / 2], [0.5, SQ3 / 2]])
TRITANGENT_WEIGHTS = np.full(3, 1.0 / 3.0)
TRITANGENT_SLOPE = 0.75
TRITANGENT_OFFSET = -0.25
CONV_AT_ORIGIN = -0.25
# mirror image for the concave roof: z = (3/4) x + 1/4 through angles 0, +-2pi/3
CONC_AT_ORIGIN = 0.25


def tritangent_plane(x):
    return TRITANGENT_SLOPE * np.asarray(x)[..., 0] + TRITANGENT_OFFSET


def in_tritangent_triangle(r, margin=0.0):
    """Barycentric test against the triangle spanned by the tritangent contacts."""
    A = np.vstack([TRITANGENT_POINTS.T, np.ones(3)])
    lam = np.linalg.solve(A, np.append(np.asarray(r, dtype=float), 1.0))
    return bool(np.all(lam > margin))


def concurrence_squared(rho):
    """Squared two-qubit concurrence from the spin-flip spectrum.

    mu_i are the square roots of the eigenvalues of rho (Y x Y) rho* (Y x Y),
    Y the Pauli y matrix, sorted decreasingly; C = max(0, mu1 - mu2 - mu3 - mu4).
    Computed through the hermitian form sqrt(rho) R sqrt(rho) for accuracy.
    """
    rho = np.asarray(rho, dtype=complex)
    y = np.array([[0, -1j], [1j, 0]])
    yy = np.kron(y, y)
    tilde = yy @ rho.conj() @ yy
    w, v = np.linalg.eigh(rho)
    sq = v @ np.diag(np.sqrt(np.clip(w, 0, None))) @ v.conj().T
    herm = sq @ tilde @ sq
    ev = np.clip(np.linalg.eigvalsh(0.5 * (herm + herm.conj().T)), 0, None)
    mu = np.sort(np.sqrt(ev))[::-1]
    return max(0.0, mu[0] - mu[1] - mu[2] - mu[3]) ** 2


def random_rank_k_density(rng, dim, k):
    X = rng.standard_normal((dim, k)) + 1j * rng.standard_normal((dim, k))
    rho = X @ X.conj().T
    return rho / np.trace(rho).real


def random_pure_state(rng, dim):
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_unitary(rng, dim):
    Z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    Q, R = np.linalg.qr(Z)
    return Q * (np.diag(R) / np.abs(np.diag(R)))


def bell_states():
    s = 1 / np.sqrt(2)
    return {
        "phi+": np.array([s, 0, 0, s]),
        "phi-": np.array([s, 0, 0, -s]),
        "psi+": np.array([0, s, s, 0]),
        "psi-": np.array([0, s, -s, 0]),
    }
