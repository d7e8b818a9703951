#include "pgdlr/checks.hpp"

#include "pgdlr/text_format.hpp"

#include <filesystem>
#include <sstream>

namespace pgdlr {

namespace {

std::string fmt(double v) { return format_double(v); }

}  // namespace

std::vector<CheckLine> check_coercivity_suite(std::size_t trials) {
  RunConfig cfg = preset_rotating_body(Scale::desk);
  const Mesh mesh = build_mesh(cfg);
  const SampleSpace space = build_space(cfg);
  const CoefficientModel model = build_model(cfg, space);
  const ReactionAnalysis analysis = analyze_reaction(model, mesh, space);
  StabilizationParams params;
  params.C_I = estimate_inverse_constant(mesh);
  params.C_E = analysis.C_E;
  SchemeConfig scfg;
  scfg.dt = cfg.dt;
  scfg.delta = cap_delta(delta_coercivity(mesh, analysis, params), delta_experiment(mesh));
  const Operators ops(mesh, model, space, scfg);
  const NormEvaluator norms(ops, analysis);
  const CoercivityReport r = check_coercivity(norms, analysis, trials);
  std::ostringstream d;
  d << "trials=" << r.trials << " violations=" << r.violations << " worst_relative_margin=" << fmt(r.worst_margin)
    << " C_I=" << fmt(params.C_I);
  return {{"coercivity", r.passed(), d.str()}};
}

RunConfig bound_case_config(BoundCase bound_case, Scheme scheme) {
  RunConfig cfg;
  cfg.name = "bound_" + to_string(bound_case) + "_" + to_string(scheme);
  cfg.n_per_side = 12;
  cfg.sample_count = 12;
  cfg.bounds = {{-1.0, 1.0}};
  cfg.model = "constant_adr";
  cfg.eps = 0.01;
  cfg.bx = 1.0;
  cfg.by = 0.5;
  cfg.initial = "random";
  cfg.rank = 2;
  cfg.scheme = to_string(scheme);
  cfg.delta_policy = "semi_implicit";
  cfg.dt = 0.005;
  cfg.T = 1.0;
  cfg.bound_ledger = true;
  if (bound_case == BoundCase::i) {
    cfg.c = 1.0;
    cfg.f = 1.0;
  } else if (bound_case == BoundCase::iii) {
    cfg.f = 1.0;
  }
  return cfg;
}

std::vector<CheckLine> check_bounds_suite(const std::string& work_dir) {
  std::vector<CheckLine> out;
  for (BoundCase bc : {BoundCase::ii, BoundCase::i, BoundCase::iii})
    for (Scheme scheme : {Scheme::implicit_euler_deterministic, Scheme::semi_implicit}) {
      RunConfig cfg = bound_case_config(bc, scheme);
      cfg.output_dir = (std::filesystem::path(work_dir) / cfg.name).string();
      const RunOutcome r = run_from_config(cfg);
      CheckLine line{cfg.name, false, ""};
      if (r.exit_code != 0 && r.ledgers.empty()) {
        line.detail = "run failed: " + r.message;
        out.push_back(line);
        continue;
      }
      const BoundLedger& l = r.ledgers.front();
      bool monotone = true;
      if (bc == BoundCase::ii)
        for (std::size_t n = 1; n < r.reports.size(); ++n)
          monotone = monotone && r.reports[n].l2 <= r.reports[n - 1].l2 * (1.0 + 1e-12);
      line.pass = l.applicable && l.pass && l.bound_case == bc && monotone;
      std::ostringstream d;
      d << to_string(l.theorem) << " case " << to_string(l.bound_case) << ' ' << l.outcome() << " left=" << fmt(l.left)
        << " right=" << fmt(l.right) << " C1=" << fmt(l.C1) << " C2=" << fmt(l.C2) << " C3=" << fmt(l.C3);
      if (bc == BoundCase::ii) d << " monotone=" << (monotone ? "yes" : "no");
      if (!l.reason.empty()) d << " (" << l.reason << ")";
      line.detail = d.str();
      out.push_back(line);
    }
  return out;
}

std::vector<CheckLine> check_oracle_suite() {
  std::vector<CheckLine> out;
  RunConfig cfg;
  cfg.n_per_side = 3;
  cfg.sample_count = 4;
  cfg.bounds = {{-1.0, 1.0}, {-1.0, 1.0}};
  cfg.eps = 0.05;
  cfg.eps_fluct = 0.02;
  cfg.bx = 1.0;
  cfg.by = 0.4;
  cfg.c = 0.8;
  cfg.c_fluct = 0.3;
  cfg.f = 1.0;
  cfg.boundary_value = 0.2;
  cfg.rank = 3;
  cfg.dt = 0.05;
  cfg.delta_policy = "constant";
  cfg.delta_value = 0.02;
  const Mesh mesh = build_mesh(cfg);
  const SampleSpace space = build_space(cfg);
  const CoefficientModel model = build_model(cfg, space);
  for (const char* stab : {"none", "supg"}) {
    SchemeConfig scfg;
    scfg.stabilization = parse_stabilization(stab);
    scfg.dt = cfg.dt;
    scfg.delta = std::vector<double>(mesh.num_triangles(), cfg.delta_value);
    const Operators ops(mesh, model, space, scfg);
    DlrState dlr = build_initial_state(cfg, mesh, space, ops.mean_blocks().mass);
    FomState fom{realize_all(dlr), 0.0};
    double worst = 0.0, worst_residual = 0.0;
    for (int n = 0; n < 10; ++n) {
      const StepResult r = step(dlr, ops);
      worst_residual = std::max(worst_residual, check_tangent_residual(dlr, r.U_tilde, r.Y_tilde, ops));
      dlr = r.state;
      fom = fom_step(fom, ops);
      worst = std::max(worst, (realize_all(dlr) - fom.fields).cwiseAbs().maxCoeff());
    }
    out.push_back({std::string("full_rank_vs_fom_") + stab, worst <= 1e-8, "max deviation " + fmt(worst)});
    out.push_back({std::string("tangent_residual_") + stab, worst_residual <= 1e-9,
                   "max relative residual " + fmt(worst_residual)});
  }
  return out;
}

std::vector<CheckLine> run_check_suite(const std::string& suite, const std::string& work_dir) {
  if (suite == "coercivity") return check_coercivity_suite();
  if (suite == "bounds") return check_bounds_suite(work_dir);
  if (suite == "oracle") return check_oracle_suite();
  throw ConfigError("unknown check suite '" + suite + "'");
}

}  // namespace pgdlr
