"""Every op's analytic gradient against central finite differences."""

import numpy as np
import pytest

from gradcheck import op_check_cases, run_all_op_checks


@pytest.mark.parametrize("name", sorted(op_check_cases(np.random.default_rng(0)).keys()))
def test_op_gradient_matches_fd(name):
    rng = np.random.default_rng(123)
    make_loss, arrays = op_check_cases(rng)[name]
    from gradcheck import check_against_fd

    err = check_against_fd(make_loss, arrays)
    assert err < 1e-4


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_all_ops_across_seeds(seed):
    errs = run_all_op_checks(seed)
    assert max(errs.values()) < 1e-4
