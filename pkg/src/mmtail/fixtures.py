"""Reference models used by the tests, the acceptance suite and the README.

* ``model_a``: one state, atoms (xi=1, rho=2, w=1/3), (xi=1, rho=1/2, w=2/3).
* ``model_a_prime``: ``model_a`` with rho=2 replaced by rho=-2.
* ``model_b``: two sticky states; moves into state 0 carry (1, 1.5), moves
  into state 1 carry (1, 0.5).
* ``model_d``: ``model_a`` with xi = 3 * (1 - rho), so that R = 3 exactly.
"""
from .model import MmpModel


def model_a():
    return MmpModel.build(["s"], {(0, 0): (1.0, [(1.0, 2.0, 1 / 3), (1.0, 0.5, 2 / 3)])}, c_xi=2.0, c_rho=4.0)


def model_a_prime():
    return MmpModel.build(["s"], {(0, 0): (1.0, [(1.0, -2.0, 1 / 3), (1.0, 0.5, 2 / 3)])}, c_xi=2.0, c_rho=4.0)


def model_a_third():
    """``model_a`` with the second atom rho=1/3 (non-arithmetic variant)."""
    return MmpModel.build(["s"], {(0, 0): (1.0, [(1.0, 2.0, 1 / 3), (1.0, 1 / 3, 2 / 3)])}, c_xi=2.0, c_rho=4.0)


def model_b():
    into0 = [(1.0, 1.5, 1.0)]
    into1 = [(1.0, 0.5, 1.0)]
    return MmpModel.build(
        ["lo", "hi"],
        {(0, 0): (0.9, into0), (0, 1): (0.1, into1), (1, 0): (0.1, into0), (1, 1): (0.9, into1)},
        c_xi=2.0,
        c_rho=4.0,
    )


def model_d():
    # c_xi must exceed |xi| = 3
    return MmpModel.build(["s"], {(0, 0): (1.0, [(-3.0, 2.0, 1 / 3), (1.5, 0.5, 2 / 3)])}, c_xi=4.0, c_rho=4.0)


def contractive_single(xi=1.0, rho=0.5):
    """One state, one atom: R = xi / (1 - rho) deterministically; no tail index."""
    return MmpModel.build(["s"], {(0, 0): (1.0, [(xi, rho, 1.0)])}, c_xi=2.0 * abs(xi) + 1.0, c_rho=4.0)


ALL = {
    "A": model_a,
    "A_prime": model_a_prime,
    "B": model_b,
    "D": model_d,
}
