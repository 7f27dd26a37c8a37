"""Reference generators used by tests, presets and the sweep harness."""
import numpy as np

from .linalg import vec, unvec
from .lindblad import build_generator, generator_from_super, random_lindbladian
from .elimination import StiffGenerator, TensorSplit
from .spectral import analyze

__all__ = ["depolarizing", "dephasing", "embed_fast", "random_stiff",
           "commuting_stiff", "two_block_generator"]


def depolarizing(d, gamma=1.0):
    """``L(rho) = gamma (tr(rho) I/d - rho)``."""
    one = vec(np.eye(d))
    s = gamma * (np.outer(one, one.conj()) / d - np.eye(d * d))
    return generator_from_super(s.astype(complex))


def dephasing(d, gamma=1.0):
    """Diagonal dephasing ``gamma D[Z]`` with ``Z = diag(0..d-1)``."""
    z = np.diag(np.arange(d)).astype(complex)
    return build_generator(np.zeros((d, d)), [np.sqrt(gamma) * z])


def embed_fast(gen, d_slow):
    """``G (x) id`` acting on the first factor of ``H_fast (x) H_slow``."""
    eye = np.eye(d_slow)
    h = np.kron(gen.hamiltonian, eye)
    return build_generator(h, [np.kron(l, eye) for l in gen.jumps])


def random_stiff(d_fast=3, d_slow=2, epsilon=0.1, seed=0, slow_scale=1.0):
    """Random fast part on ``H_fast`` (x) id plus a random slow part on the product.

    The fast part has a unique full-rank steady state on its factor, so the
    kernel on the product is ``rho_f (x) B(H_slow)`` of dimension ``d_slow^2``.
    With ``d_slow = 1`` the fast part is primitive on the whole space.
    """
    gf = random_lindbladian(d_fast, seed=seed, n_jumps=2)
    fast = embed_fast(gf, d_slow) if d_slow > 1 else gf
    slow = random_lindbladian(d_fast * d_slow, seed=seed + 1000, n_jumps=1,
                              h_scale=slow_scale, l_scale=0.3 * slow_scale)
    rho_f = analyze(gf).steady_state
    return StiffGenerator(fast, slow, epsilon, TensorSplit(d_fast, d_slow, rho_f))


def commuting_stiff(d=2, epsilon=0.1):
    """Fast and slow parts that commute: two diagonal dephasings."""
    return StiffGenerator(dephasing(d, 1.0), dephasing(d, 0.3), epsilon)


def two_block_generator(d_block=2, gamma=1.0):
    """Block-diagonal generator with two decoherence-free blocks."""
    d = 2 * d_block
    jumps = []
    for b in range(2):
        for i in range(1, d_block):
            l = np.zeros((d, d), complex)
            l[b * d_block, b * d_block + i] = np.sqrt(gamma)
            jumps.append(l)
    return build_generator(np.zeros((d, d)), jumps)
