import numpy as np
import pytest

from invchain import mmio
from invchain.client import ServiceClient, ServiceError
from invchain.generators import gen_grid2d


@pytest.fixture(scope="module")
def client():
    with ServiceClient() as c:
        yield c


def rhs_text(n, seed=0):
    rng = np.random.default_rng(seed)
    b = rng.standard_normal(n)
    b -= b.mean()
    return mmio.vector_to_text(b)


class TestHealthAndGen:
    def test_health(self, client):
        out = client.get("/health")
        assert out["status"] == "ok"

    def test_gen_path(self, client):
        out = client.post("/gen", {"spec": "path 3"})
        assert out["n"] == 3
        assert out["edges"] == 2
        m = mmio.matrix_from_text(out["matrix_mm"])
        assert m.dim == 3

    def test_gen_rejects_degenerate(self, client):
        with pytest.raises(ServiceError) as err:
            client.post("/gen", {"spec": "grid2d 1x1"})
        assert err.value.status_code == 400

    def test_gen_embeds_config_hash_and_seed(self, client):
        out = client.post("/gen", {"spec": "path 4", "seed": 11})
        assert out["seed"] == 11
        assert len(out["config_hash"]) == 16


@pytest.fixture(scope="module")
def grid_mm():
    return mmio.matrix_to_text(gen_grid2d(5, 5))


class TestBuildAndSolve:
    def test_build_validate_and_reuse(self, client, grid_mm):
        built = client.post("/build-chain", {
            "matrix_mm": grid_mm, "kind": "laplacian",
            "options": {"seed": 4}, "validate_mode": "strict",
        })
        assert built["validation_pass"] is True
        assert "level 0" in built["stats_text"]
        assert "kind=laplacian" in built["manifest"]

        solved = client.post("/solve", {
            "matrix_mm": grid_mm, "rhs_text": rhs_text(25),
            "eps": 1e-9, "chain_id": built["chain_id"],
        })
        assert solved["converged"]
        x = mmio.vector_from_text(solved["solution_text"])
        assert x.shape == (25,)
        assert abs(x.sum()) < 1e-8

    def test_solve_with_inline_chain_payload(self, client, grid_mm):
        built = client.post("/build-chain", {
            "matrix_mm": grid_mm, "options": {"seed": 4}, "validate_mode": "none",
        })
        solved = client.post("/solve", {
            "matrix_mm": grid_mm, "rhs_text": rhs_text(25, seed=3),
            "eps": 1e-8, "chain": built["chain"],
        })
        assert solved["converged"]
        assert "config_hash=" in solved["report_text"]
        assert "seed=" in solved["report_text"]

    def test_solve_ad_hoc_builds_chain(self, client, grid_mm):
        solved = client.post("/solve", {
            "matrix_mm": grid_mm, "rhs_text": rhs_text(25, seed=5), "eps": 1e-6,
        })
        assert solved["converged"]

    def test_solve_sddm_kind(self, client):
        # realized SDDM matrix: grounded 3-path [[2,-1],[-1,1]]
        text = ("%%MatrixMarket matrix coordinate real symmetric\n"
                "2 2 3\n1 1 2\n2 1 -1\n2 2 1\n")
        solved = client.post("/solve", {
            "matrix_mm": text, "kind": "sddm", "rhs_text": "1\n0\n", "eps": 1e-10,
        })
        x = mmio.vector_from_text(solved["solution_text"])
        assert np.allclose(x, [1.0, 1.0], atol=1e-9)  # inverse of [[2,-1],[-1,1]] @ e0

    def test_rhs_not_orthogonal_rejected(self, client, grid_mm):
        with pytest.raises(ServiceError) as err:
            client.post("/solve", {
                "matrix_mm": grid_mm, "rhs_text": mmio.vector_to_text(np.ones(25)),
            })
        assert err.value.status_code == 400
        assert "orthogonal" in err.value.detail

    def test_unknown_chain_id(self, client, grid_mm):
        with pytest.raises(ServiceError) as err:
            client.post("/solve", {
                "matrix_mm": grid_mm, "rhs_text": rhs_text(25),
                "chain_id": "deadbeef00000000",
            })
        assert err.value.status_code == 404


class TestVerifyEndpoints:
    def test_verify_approx(self, client):
        x = mmio.matrix_to_text(mmio.matrix_from_text(
            "%%MatrixMarket matrix coordinate real symmetric\n"
            "2 2 3\n1 1 2\n2 1 -1\n2 2 2\n"))
        y = ("%%MatrixMarket matrix coordinate real symmetric\n"
             "2 2 2\n1 1 2\n2 2 2\n")
        out = client.post("/verify-approx", {"x_mm": x, "y_mm": y, "eps": 0.3})
        assert out["lam_max"] == pytest.approx(2.0)
        assert out["tightest_eps"] == pytest.approx(np.log(2.0))
        assert out["passed"] is False

    def test_verify_chain_roundtrip(self, client):
        grid_mm = mmio.matrix_to_text(gen_grid2d(4, 4))
        built = client.post("/build-chain", {
            "matrix_mm": grid_mm, "options": {"seed": 0}, "validate_mode": "none",
        })
        out = client.post("/verify-chain",
                          {"chain": built["chain"], "strict": True})
        assert out["all_pass"], out["report_text"]

    def test_verify_chain_needs_input(self, client):
        with pytest.raises(ServiceError) as err:
            client.post("/verify-chain", {})
        assert err.value.status_code == 400


class TestBenchEndpoint:
    def test_tiny_ladder(self, client):
        out = client.post("/bench", {"widths": [4, 6], "eps": 1e-6, "seed": 0})
        assert len(out["rows"]) == 2
        assert out["rows"][0]["n"] == 16
        assert all(row["rel_residual"] < 1e-5 for row in out["rows"])
        assert "fit exponent" in out["table_text"]
