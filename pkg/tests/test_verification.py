import json

import numpy as np

from symvae.verification import evaluation_grid, random_models, run_verification, symmetric_kl_check


def test_random_models_are_seeded():
    a, b = random_models(2, 5), random_models(2, 5)
    np.testing.assert_array_equal(a[1].A, b[1].A)


def test_evaluation_grid_shape():
    x, z = evaluation_grid(random_models(1, 0)[0], per_axis=3)
    assert x.shape == (81, 2) and z.shape == (81, 2)


def test_symmetric_kl_check_close_to_closed_form():
    est, se, closed = symmetric_kl_check(random_models(1, 3)[0], n=20_000, seed=0)
    assert se > 0 and abs(est - closed) < 4 * se


def test_small_run_is_json_serializable():
    result = run_verification(seed=0, n_models=1, n_ratio_models=1, disc_steps=20)
    text = json.dumps(result)
    back = json.loads(text)
    assert len(back["decompositions"]) == 4 and len(back["optimal_discriminator"]) == 1
    assert all(isinstance(r["passed"], bool) for r in back["decompositions"])
    assert set(back["seconds"]) == {"decompositions", "optimal_discriminator", "symmetric_kl"}
