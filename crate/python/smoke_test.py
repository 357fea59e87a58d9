"""Smoke test for the Python bindings.

Build and install the extension first:

    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/ailfem-*.whl
"""

import math

import ailfem


def main():
    mesh = ailfem.Mesh.builtin("l-shape")
    assert mesh.n_triangles == 6
    fine = mesh.refine([0, 3])
    fine.check_conformity()
    assert fine.n_triangles > mesh.n_triangles
    assert abs(fine.area() - 3.0) < 1e-12
    assert ailfem.Mesh.from_text(fine.to_text()).n_triangles == fine.n_triangles

    assert ailfem.dorfler_mark([4.0, 1.0, 2.0, 0.5], 0.5) == [0]
    assert ailfem.dorfler_mark([4.0, 1.0, 2.0, 0.5], 0.8) == [0, 2]

    adm = ailfem.admissible_params(0.3, 0.1, 0.5, 1.0, 1.0)
    assert adm["i_min"] == 2 and adm["theta_mark"] > 0.3

    xs = [10.0 ** (k / 4) for k in range(20)]
    assert abs(ailfem.fit_rate(xs, [x ** -0.5 for x in xs]) + 0.5) < 1e-12

    result = ailfem.run("sine-gordon", p=1, tol=1e-1)
    assert result.converged, result.termination
    assert result.final_eta < 1e-1
    recs = result.records
    cost = 0
    for r in recs:
        cost += r["n_triangles"]
        assert r["cost"] == cost
    assert math.isclose(result.weighted_cost, recs[-1]["eta"] * recs[-1]["cost"] ** 0.5)
    assert result.summary["termination"] == "converged"
    assert len(result.solution) == len(result.dof_coords) >= recs[-1]["dofs"]

    single = ailfem.run("linear-poisson", max_levels=0)
    assert single.termination == "max-levels"
    assert {r["level"] for r in single.records} == {0}

    try:
        ailfem.run("sine-gordon", theta=1.5)
    except ValueError as e:
        assert "theta" in str(e)
    else:
        raise AssertionError("invalid theta accepted")

    print("python smoke test passed:", result)


if __name__ == "__main__":
    main()
