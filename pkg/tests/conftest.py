import itertools

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def crandn(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


class DenseFock:
    """Brute-force oracle: each mode truncated at ``cut`` quanta, Kronecker ladders.

    ``embed`` picks out the occupation states of a :class:`FockBasis` in the
    product space, so restricted products of ladders can be compared with the
    sparse assembly.
    """

    def __init__(self, M, cut):
        self.M, self.cut = M, cut
        one = np.diag(np.sqrt(np.arange(1, cut + 1)), 1)
        eye = np.eye(cut + 1)
        self.a = []
        for j in range(M):
            mats = [one if k == j else eye for k in range(M)]
            out = mats[0]
            for m in mats[1:]:
                out = np.kron(out, m)
            self.a.append(out)

    def index(self, occ):
        idx = 0
        for o in occ:
            idx = idx * (self.cut + 1) + int(o)
        return idx

    def embed(self, basis):
        P = np.zeros(((self.cut + 1) ** self.M, basis.dim))
        for s, occ in enumerate(basis.states):
            P[self.index(occ), s] = 1.0
        return P

    def ann(self, c):
        return sum(np.conj(cj) * aj for cj, aj in zip(c, self.a))

    def cre(self, c):
        return self.ann(c).conj().T


@pytest.fixture
def dense_fock():
    return DenseFock


def occupations(M, n):
    return [o for o in itertools.product(range(n + 1), repeat=M) if sum(o) == n]


_VERDICTS = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line per acceptance criterion."""
    def record(number, title, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'} criterion {number:>2}: {title} | {detail}"
        _VERDICTS.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
