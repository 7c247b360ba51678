// Solve the default economy once at a small sample size and compare the
// result with the grid reference equilibrium.

#include <cstdio>

#include "mfgham/mfgham.hpp"

int main() {
  using namespace mfgham;
  const AiyagariEnv env;

  SolverConfig cfg;
  cfg.samples = 500;
  cfg.rounds = 8;
  const EquilibriumResult res = solve(env, cfg, /*seed=*/7);
  for (std::size_t t = 0; t < res.trajectory.size(); ++t)
    std::printf("t=%2zu  wage %.4f  rent %.4f\n", t, res.trajectory[t].wage, res.trajectory[t].rent);

  GridSpec grid;
  grid.b_points = 200;
  grid.a_cells = 200;
  const OracleResult ref = reference_equilibrium(env, grid);
  std::printf("reference  wage %.4f  rent %.4f   l1 error %.4f\n", ref.z.wage, ref.z.rent,
              l1_distance(res.final_z(), ref.z));
}
