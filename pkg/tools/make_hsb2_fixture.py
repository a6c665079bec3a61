"""Regenerate the bundled high-school-scores fixture (src/dpms/data/hsb2.csv).

The fixture is a synthetic 200-student sample matching the published
summary statistics of the classic High School and Beyond (hsb2) subset:
score means/SDs, the male/female split, and the score correlation
structure.  The gender-math correlation is calibrated so that the
intercept-only test of gender on math scores lands on the reference
posterior probability (0.07 with the sample-size g-prior and equal prior
odds), which makes the fixture a faithful stand-in for the real file in
deterministic tests.

Construction: an orthonormal basis orthogonal to the intercept whose
first direction is the standardized gender indicator, colored by the
Cholesky factor of the target correlation matrix, gives columns whose
sample moments match the targets exactly; scores are then rounded to one
decimal (which perturbs correlations by under 1e-3).
"""

import math
from pathlib import Path

import numpy as np

from dpms.linmodel import GPriorSpec, log_bayes_factor

OUT = Path(__file__).resolve().parents[1] / "src" / "dpms" / "data" / "hsb2.csv"

N = 200
N_FEMALE = 109  # gender = 1
SEED = 20240211

# (mean, sd) of the published hsb2 score summaries.
MOMENTS = {
    "math": (52.645, 9.368),
    "read": (52.23, 10.253),
    "science": (51.85, 9.901),
    "write": (52.775, 9.479),
    "socst": (52.405, 10.736),
}

# Correlation targets; variable order: gender, math, read, science, write, socst.
CORR_SCORES = {
    ("math", "read"): 0.662,
    ("math", "science"): 0.631,
    ("math", "write"): 0.617,
    ("math", "socst"): 0.544,
    ("read", "science"): 0.630,
    ("read", "write"): 0.597,
    ("read", "socst"): 0.621,
    ("science", "write"): 0.570,
    ("science", "socst"): 0.465,
    ("write", "socst"): 0.605,
}
CORR_GENDER = {
    "read": -0.05,
    "science": -0.13,
    "write": 0.26,
    "socst": 0.05,
}

TARGET_P_H11 = 0.07  # posterior probability of the gender effect, pi0 = 0.5


def solve_gender_math_corr() -> float:
    """R^2 such that the n=200, g=200 test posterior hits the target."""
    target_log_bf = math.log(TARGET_P_H11 / (1.0 - TARGET_P_H11))
    lo, hi = 0.0, 0.2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if log_bayes_factor(mid, N, 1, 1, GPriorSpec.fixed(N)) < target_log_bf:
            lo = mid
        else:
            hi = mid
    return math.sqrt(0.5 * (lo + hi))


def build_columns(r_gender_math: float) -> dict[str, np.ndarray]:
    names = ["gender", "math", "read", "science", "write", "socst"]
    k = len(names)
    corr = np.eye(k)

    def put(a, b, value):
        i, j = names.index(a), names.index(b)
        corr[i, j] = corr[j, i] = value

    put("gender", "math", r_gender_math)
    for col, value in CORR_GENDER.items():
        put("gender", col, value)
    for (a, b), value in CORR_SCORES.items():
        put(a, b, value)
    assert np.linalg.eigvalsh(corr)[0] > 0, "correlation targets are not PD"

    rng = np.random.default_rng(SEED)
    gender = np.zeros(N)
    gender[rng.choice(N, size=N_FEMALE, replace=False)] = 1.0

    # Orthonormal basis orthogonal to the intercept, first direction =
    # standardized gender.
    g_c = gender - gender.mean()
    basis = [g_c / np.linalg.norm(g_c)]
    ones = np.ones(N) / math.sqrt(N)
    while len(basis) < k:
        cand = rng.standard_normal(N)
        for b in [ones, *basis]:
            cand -= (cand @ b) * b
        basis.append(cand / np.linalg.norm(cand))
    b_mat = np.column_stack(basis)

    chol_upper = np.linalg.cholesky(corr).T
    std_cols = b_mat @ chol_upper  # exact unit columns with corr structure

    cols = {"gender": gender}
    for j, name in enumerate(names[1:], start=1):
        mean, sd = MOMENTS[name]
        cols[name] = np.round(mean + sd * math.sqrt(N - 1) * std_cols[:, j], 1)
    return cols


def main() -> None:
    cols = build_columns(solve_gender_math_corr())
    names = ["id", "gender", "read", "write", "math", "science", "socst"]
    cols["id"] = np.arange(1, N + 1)
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w") as fh:
        fh.write(",".join(names) + "\n")
        for i in range(N):
            row = []
            for name in names:
                v = cols[name][i]
                row.append(str(int(v)) if name in ("id", "gender") else f"{v:.1f}")
            fh.write(",".join(row) + "\n")
    print(f"wrote {OUT} ({N} rows)")


if __name__ == "__main__":
    main()
