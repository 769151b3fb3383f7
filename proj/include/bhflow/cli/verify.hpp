#pragma once

// The verify battery: every property check run on the configured grid and
// basis, collected into a pass/fail scorecard.

#include <cmath>
#include <vector>

#include "bhflow/checks.hpp"
#include "bhflow/cli/config.hpp"

namespace bhflow::cli {

/// Uniform to exp(cos pi x) / Z along the first axis, used when the config
/// has no usable path.
inline CoefficientPath demo_path(int nodes, int refine = 1) {
  return CoefficientPath::linear(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, 1.0 / std::sqrt(2.0)),
                                 (nodes - 1) * refine + 1);
}

inline Json check_json(const CheckResult& c) {
  Json j;
  j["name"] = c.name;
  j["pass"] = c.pass;
  j["value"] = json_number(c.value);
  j["relation"] = c.relation;
  j["threshold"] = c.threshold;
  j["detail"] = c.detail;
  return j;
}

inline std::vector<CheckResult> run_verify(const Experiment& ex) {
  const ExperimentConfig& cfg = ex.config;
  const VerifyConfig& v = cfg.verify;
  const Grid& g = ex.grid;
  const Grid line = Grid::line(g.extent(0), g.cells(0));
  const bool own_path = cfg.path.present && cfg.path.generator != "table" && cfg.basis.family != "custom";

  std::vector<CheckResult> out;
  out.push_back(check_closed_form_neumann(line));
  out.push_back(check_neumann_order(line));
  out.push_back(check_linearization(g, v.instances, v.seed));
  out.push_back(check_form_derivative(g, v.instances, v.seed));
  out.push_back(check_flow_matching(g, v.instances, v.seed));

  if (ex.path) {
    out.push_back(check_fisher_rao(g, ex.basis.combine(ex.path->at(0)),
                                   ex.basis.combine(ex.path->at(ex.path->nodes() - 1)), ex.path->nodes()));
  } else {
    out.push_back(check_fisher_rao(g, bhflow::detail::random_field(g, v.seed, 3000, 1.0),
                                   bhflow::detail::random_field(g, v.seed, 3001, 1.0), 33));
  }

  auto grid_at = [&](int level) { return level == 1 ? g : refined(g, level); };
  if (own_path) {
    out.push_back(check_continuity_order(
        grid_at, [&](const Grid& gg) { return make_config_basis(cfg, gg); },
        [&](int level) { return make_config_path(cfg, level); }));
  } else {
    out.push_back(check_continuity_order(
        grid_at, [](const Grid& gg) { return fourier_basis(gg, 1); }, [](int level) { return demo_path(17, level); }));
  }

  out.push_back(check_kinetic_spd(g, ex.basis, v.instances, v.seed, ex.bounds));

  // The gradient identity is a property of the discrete objective at any
  // resolution; a coarse copy of the grid keeps the finite differences cheap.
  const int coarse_cells = std::min(g.cells(0), 32);
  const Grid coarse = g.dim() == 1 ? Grid::line(g.extent(0), coarse_cells)
                                   : Grid::rectangle(g.extent(0), g.extent(1), coarse_cells,
                                                     std::min(g.cells(1), 32));
  const Basis coarse_basis =
      cfg.basis.family == "fourier"    ? fourier_basis(coarse, cfg.basis.size)
      : cfg.basis.family == "legendre" ? legendre_basis(coarse, cfg.basis.size)
                                       : fourier_basis(coarse, std::min(cfg.basis.size, 3));
  const ObservationModel coarse_model = cfg.observation.present
                                            ? make_config_model(cfg, coarse)
                                            : make_observation_model(coarse, monomial_features(coarse, 2));
  CheckResult grad = check_inverse_gradient(coarse, coarse_basis, coarse_model, 5, v.instances, v.seed);
  grad.detail += " (" + std::to_string(coarse.size()) + " cells, 5 nodes)";
  out.push_back(grad);

  const ObservationModel model = ex.model ? *ex.model : make_observation_model(g, monomial_features(g, 2));
  out.push_back(check_jacobian(g, ex.basis, model, v.instances, v.seed));

  CheckResult ks = ex.path ? check_particles(g, ex.basis, *ex.path, v.particles, v.particle_steps, v.seed, v.particle_ks)
                           : check_particles(g, fourier_basis(g, 1), demo_path(33), v.particles, v.particle_steps,
                                             v.seed, v.particle_ks);
  out.push_back(ks);
  return out;
}

inline Json scorecard(const ExperimentConfig& cfg, const std::vector<CheckResult>& checks) {
  Json j;
  j["config"] = cfg.source.string();
  bool all = true;
  Json list = Json::array(), failed = Json::array();
  for (const auto& c : checks) {
    list.push_back(check_json(c));
    if (!c.pass) failed.push_back(c.name);
    all = all && c.pass;
  }
  j["all_pass"] = all;
  j["checks"] = list;
  j["failed"] = failed;
  return j;
}

}  // namespace bhflow::cli
