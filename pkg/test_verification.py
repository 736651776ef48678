import pytest

from errors import DomainError
from grid import Domain
from verification import CHECKS, run_suite

STRUCTURAL = [
    "gamma_recurrence", "truncation", "index_bijection", "diagonal_dominance",
    "coercivity", "hardy_witness", "adjoint_identity", "residual_report",
]


class TestSuiteChecks:
    """Structural checks on a small ball mesh."""

    def test_registered(self):
        assert set(CHECKS) >= set(STRUCTURAL) | {"duality_identity", "symmetry", "maximum_principle"}

    def test_structural_checks_pass(self):
        table = run_suite(gamma=0.1, N=10, names=STRUCTURAL)
        assert table["check"].tolist() == STRUCTURAL
        assert table["passed"].all(), table.loc[~table["passed"]].to_string()

    def test_duality_and_principles_pass(self):
        names = ["symmetry", "off_diagonal_sign", "maximum_principle", "duality_identity"]
        table = run_suite(gamma=0.15, N=10, names=names)
        assert table["passed"].all(), table.loc[~table["passed"]].to_string()


class TestSuiteConfiguration:

    def test_runs_on_box(self):
        names = ["index_bijection", "diagonal_dominance", "hardy_witness", "residual_report"]
        table = run_suite(gamma=0.0, N=10, domain=Domain.box(1.0, 3), names=names)
        assert table["passed"].all(), table.loc[~table["passed"]].to_string()

    def test_coupling_outside_hardy_range(self):
        with pytest.raises(DomainError):
            run_suite(gamma=0.3, N=10, names=["constants"])
        with pytest.raises(DomainError):
            run_suite(gamma=-0.1, N=10, names=["constants"])

    def test_failure_recorded_not_raised(self):
        table = run_suite(gamma=0.1, N=10, tol=1e-30, names=["residual_report"])
        assert not table["passed"].iloc[0]
        assert table["error"].iloc[0]
