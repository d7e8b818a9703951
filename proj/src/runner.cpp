#include "pgdlr/runner.hpp"

#include "pgdlr/text_format.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

namespace pgdlr {

namespace pt = boost::property_tree;

// --- configuration text -----------------------------------------------------

namespace {

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, sep)) out.push_back(item);
  return out;
}

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(parse_double(tok));
  return out;
}

std::vector<std::vector<double>> parse_vectors(const std::string& text) {
  std::vector<std::vector<double>> out;
  for (const auto& part : split(text, ';')) {
    auto v = parse_numbers(part);
    if (!v.empty()) out.push_back(std::move(v));
  }
  return out;
}

std::string join_numbers(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + format_double(v[i]);
  return out;
}

std::string join_vectors(const std::vector<std::vector<double>>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "; " : "") + join_numbers(v[i]);
  return out;
}

template <class T>
std::string join_indices(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? " " : "") + std::to_string(v[i]);
  return out;
}

std::vector<std::size_t> parse_indices(const std::string& text) {
  std::vector<std::size_t> out;
  for (double d : parse_numbers(text)) {
    if (d < 0 || d != std::floor(d)) throw ConfigError("sample index list must hold non-negative integers");
    out.push_back(static_cast<std::size_t>(d));
  }
  return out;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("not a boolean: '" + text + "'");
}

// One table drives reading, writing and the unknown-key check.
struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> read;
  std::function<std::string(const RunConfig&)> write;
};

std::uint64_t parse_u64(const std::string& s) {
  const double d = parse_double(s);
  if (d < 0 || d != std::floor(d)) throw ConfigError("expected a non-negative integer, got '" + s + "'");
  return static_cast<std::uint64_t>(d);
}

#define PGDLR_STR(member) \
  {#member, [](RunConfig& c, const std::string& s) { c.member = s; }, [](const RunConfig& c) { return c.member; }}
#define PGDLR_NUM(member)                                                       \
  {#member, [](RunConfig& c, const std::string& s) { c.member = parse_double(s); }, \
   [](const RunConfig& c) { return format_double(c.member); }}
#define PGDLR_INT(member)                                                                                   \
  {#member, [](RunConfig& c, const std::string& s) { c.member = static_cast<decltype(c.member)>(parse_u64(s)); }, \
   [](const RunConfig& c) { return std::to_string(c.member); }}
#define PGDLR_BOOL(member)                                                      \
  {#member, [](RunConfig& c, const std::string& s) { c.member = parse_bool(s); }, \
   [](const RunConfig& c) { return std::string(c.member ? "true" : "false"); }}

const std::vector<std::pair<std::string, std::vector<Field>>>& schema() {
  static const std::vector<std::pair<std::string, std::vector<Field>>> table = {
      {"run", {PGDLR_STR(name)}},
      {"mesh", {PGDLR_INT(n_per_side)}},
      {"samples",
       {PGDLR_STR(sample_kind), PGDLR_INT(sample_count), PGDLR_INT(sample_seed),
        {"bounds",
         [](RunConfig& c, const std::string& s) {
           c.bounds.clear();
           for (const auto& v : parse_vectors(s)) {
             if (v.size() != 2) throw ConfigError("each bound needs a lower and an upper value");
             c.bounds.emplace_back(v[0], v[1]);
           }
         },
         [](const RunConfig& c) {
           std::vector<std::vector<double>> v;
           for (auto [a, b] : c.bounds) v.push_back({a, b});
           return join_vectors(v);
         }},
        PGDLR_INT(points_per_axis)}},
      {"model",
       {PGDLR_STR(model), PGDLR_NUM(eps), PGDLR_NUM(eps_fluct), PGDLR_NUM(bx), PGDLR_NUM(by), PGDLR_NUM(c),
        PGDLR_NUM(c_fluct), PGDLR_NUM(f), PGDLR_NUM(boundary_value)}},
      {"initial", {PGDLR_STR(initial), PGDLR_INT(rank), PGDLR_NUM(snapshot_tol), PGDLR_INT(initial_seed)}},
      {"scheme",
       {PGDLR_STR(scheme), PGDLR_STR(stabilization), PGDLR_STR(delta_policy), PGDLR_NUM(delta_value), PGDLR_NUM(dt),
        PGDLR_NUM(T), PGDLR_NUM(max_condition), PGDLR_NUM(blowup_factor)}},
      {"output",
       {PGDLR_STR(output_dir), PGDLR_BOOL(tangent_residual), PGDLR_BOOL(bound_ledger),
        {"track_samples", [](RunConfig& c, const std::string& s) { c.track_samples = parse_indices(s); },
         [](const RunConfig& c) { return join_indices(c.track_samples); }},
        {"track_points", [](RunConfig& c, const std::string& s) { c.track_points = parse_vectors(s); },
         [](const RunConfig& c) { return join_vectors(c.track_points); }},
        {"dump_samples", [](RunConfig& c, const std::string& s) { c.dump_samples = parse_indices(s); },
         [](const RunConfig& c) { return join_indices(c.dump_samples); }},
        {"dump_points", [](RunConfig& c, const std::string& s) { c.dump_points = parse_vectors(s); },
         [](const RunConfig& c) { return join_vectors(c.dump_points); }},
        {"dump_times", [](RunConfig& c, const std::string& s) { c.dump_times = parse_numbers(s); },
         [](const RunConfig& c) { return join_numbers(c.dump_times); }}}},
  };
  return table;
}

#undef PGDLR_STR
#undef PGDLR_NUM
#undef PGDLR_INT
#undef PGDLR_BOOL

}  // namespace

RunConfig read_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
  RunConfig cfg;
  for (const auto& [section, body] : tree) {
    auto it = std::find_if(schema().begin(), schema().end(), [&](const auto& s) { return s.first == section; });
    if (it == schema().end()) throw ConfigError("configuration: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      auto f = std::find_if(it->second.begin(), it->second.end(), [&](const Field& x) { return key == x.key; });
      if (f == it->second.end()) throw ConfigError("configuration: unknown key " + section + "." + key);
      try {
        f->read(cfg, value.get_value<std::string>());
      } catch (const ConfigError& e) {
        throw ConfigError("configuration: " + section + "." + key + ": " + e.what());
      }
    }
  }
  return cfg;
}

RunConfig read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path + "'");
  return read_config(in);
}

void write_config(std::ostream& out, const RunConfig& cfg) {
  bool first = true;
  for (const auto& [section, fields] : schema()) {
    out << (first ? "" : "\n") << '[' << section << "]\n";
    first = false;
    for (const Field& f : fields) out << f.key << " = " << f.write(cfg) << '\n';
  }
}

void check_config(const RunConfig& cfg) {
  if (cfg.n_per_side < 1) throw ConfigError("mesh.n_per_side must be at least 1");
  if (cfg.sample_kind != "monte_carlo" && cfg.sample_kind != "tensor_grid")
    throw ConfigError("samples.sample_kind must be monte_carlo or tensor_grid");
  if (cfg.bounds.empty()) throw ConfigError("samples.bounds is empty");
  if (cfg.sample_kind == "tensor_grid" && cfg.points_per_axis < 1)
    throw ConfigError("samples.points_per_axis must be positive for a tensor grid");
  if (cfg.model != "rotating_body" && cfg.model != "boundary_layer" && cfg.model != "constant_adr")
    throw ConfigError("model.model must be rotating_body, boundary_layer or constant_adr");
  if (cfg.initial != "rotating_body" && cfg.initial != "boundary_layer_snapshot" && cfg.initial != "random")
    throw ConfigError("initial.initial must be rotating_body, boundary_layer_snapshot or random");
  const Scheme scheme = parse_scheme(cfg.scheme);
  parse_stabilization(cfg.stabilization);
  if (cfg.delta_policy != "experiment" && cfg.delta_policy != "coercivity" && cfg.delta_policy != "semi_implicit" &&
      cfg.delta_policy != "constant")
    throw ConfigError("scheme.delta_policy must be experiment, coercivity, semi_implicit or constant");
  if (cfg.delta_policy == "constant" && !(cfg.delta_value >= 0.0)) throw ConfigError("scheme.delta_value must be >= 0");
  if (!(cfg.dt > 0.0)) throw ConfigError("scheme.dt must be positive");
  if (!(cfg.T >= 0.0)) throw ConfigError("scheme.T must be non-negative");
  if (cfg.snapshot_tol < 0.0) throw ConfigError("initial.snapshot_tol must be non-negative");
  if (scheme == Scheme::implicit_euler_deterministic && cfg.model == "constant_adr" &&
      (cfg.eps_fluct != 0.0 || cfg.c_fluct != 0.0))
    throw ConfigError("implicit_euler_deterministic forbids random coefficients");
  if (scheme == Scheme::implicit_euler_deterministic && cfg.model != "constant_adr")
    throw ConfigError("implicit_euler_deterministic forbids random coefficients");
  if (cfg.model == "rotating_body" && cfg.bounds.size() < 3)
    throw ConfigError("rotating_body needs a three-dimensional parameter space");
  if (cfg.model == "boundary_layer" && cfg.bounds.size() < 4)
    throw ConfigError("boundary_layer needs a four-dimensional parameter space");
  if (cfg.initial == "rotating_body" && cfg.rank > 2) throw ConfigError("rotating_body initial data has rank <= 2");
}

// --- presets ---------------------------------------------------------------

Scale parse_scale(const std::string& name) {
  if (name == "paper") return Scale::paper;
  if (name == "desk") return Scale::desk;
  throw ConfigError("unknown scale '" + name + "'");
}

RunConfig preset_rotating_body(Scale scale) {
  RunConfig cfg;
  cfg.name = scale == Scale::paper ? "rotating_body_paper" : "rotating_body_desk";
  cfg.model = "rotating_body";
  cfg.initial = "rotating_body";
  cfg.rank = 2;
  cfg.sample_kind = "monte_carlo";
  cfg.bounds = {{-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
  cfg.sample_seed = 2024;
  cfg.scheme = "semi_implicit";
  cfg.stabilization = "supg";
  cfg.delta_policy = "experiment";
  cfg.track_samples = {0, 1, 2, 3, 4};
  cfg.dump_points = {{0.05, -0.63, 0.67}};
  if (scale == Scale::paper) {
    cfg.n_per_side = 128;
    cfg.sample_count = 7000;
    cfg.T = 2.0 * std::numbers::pi;
    cfg.dt = 2.0 * std::numbers::pi / 70000.0;
  } else {
    cfg.n_per_side = 32;
    cfg.sample_count = 200;
    // the MD comparison window [0, 1]
    cfg.T = 1.0;
    cfg.dt = 1.0 / 640.0;
  }
  cfg.dump_times = {0.0, cfg.T};
  cfg.output_dir = cfg.name;
  return cfg;
}

RunConfig preset_boundary_layer(Scale scale) {
  RunConfig cfg;
  cfg.name = scale == Scale::paper ? "boundary_layer_paper" : "boundary_layer_desk";
  cfg.model = "boundary_layer";
  cfg.initial = "boundary_layer_snapshot";
  cfg.sample_kind = "tensor_grid";
  cfg.bounds = {{5000.0, 6000.0}, {-1.0, 1.0}, {-1.0, 1.0}, {-1.0, 1.0}};
  cfg.scheme = "semi_implicit";
  cfg.stabilization = "supg";
  cfg.delta_policy = "experiment";
  cfg.T = 1.2;
  cfg.dt = 1.2 / 50.0;
  cfg.track_samples = {0};
  if (scale == Scale::paper) {
    cfg.n_per_side = 50;
    cfg.points_per_axis = 10;
    cfg.rank = 34;
    cfg.snapshot_tol = 0.0;
  } else {
    cfg.n_per_side = 20;
    cfg.points_per_axis = 4;
    cfg.rank = 0;
    cfg.snapshot_tol = 1e-4;
  }
  cfg.dump_samples = {0};
  cfg.dump_times = {0.0, 0.4, 0.8, 1.2};
  cfg.output_dir = cfg.name;
  return cfg;
}

PresetEcho echo(const RunConfig& cfg) {
  PresetEcho e;
  const auto n = static_cast<std::size_t>(cfg.n_per_side) + 1;
  e.N_h = n * n;
  if (cfg.sample_kind == "tensor_grid") {
    e.N_C = 1;
    for (std::size_t i = 0; i < cfg.bounds.size(); ++i) e.N_C *= static_cast<std::size_t>(cfg.points_per_axis);
  } else {
    e.N_C = cfg.sample_count;
  }
  e.dt = cfg.dt;
  e.T = cfg.T;
  if (cfg.delta_policy == "experiment")
    e.delta = "h_K/4";
  else if (cfg.delta_policy == "constant")
    e.delta = format_double(cfg.delta_value);
  else
    e.delta = cfg.delta_policy;
  if (cfg.stabilization == "none") e.delta = "0 (stabilization none)";
  if (cfg.snapshot_tol > 0.0)
    e.snapshot_tol = cfg.snapshot_tol;
  else
    e.R = cfg.rank;
  return e;
}

std::string format_echo(const PresetEcho& e) {
  std::ostringstream out;
  out << "N_h=" << e.N_h << " N_C=" << e.N_C << " dt=" << format_double(e.dt) << " T=" << format_double(e.T)
      << " delta_K=" << e.delta;
  if (e.R) out << " R=" << *e.R;
  if (e.snapshot_tol) out << " snapshot_tol=" << format_double(*e.snapshot_tol);
  return out.str();
}

// --- builders ----------------------------------------------------------------

Mesh build_mesh(const RunConfig& cfg) {
  Mesh mesh = build_structured_mesh(cfg.n_per_side);
  if (cfg.model == "boundary_layer") tag_boundary_layer_split(mesh);
  return mesh;
}

SampleSpace build_space(const RunConfig& cfg) {
  if (cfg.sample_kind == "tensor_grid") {
    std::vector<GridAxis> axes;
    for (auto [a, b] : cfg.bounds) axes.push_back({a, b, cfg.points_per_axis});
    return make_tensor_grid(axes);
  }
  MonteCarloSpec spec;
  spec.bounds = cfg.bounds;
  return make_monte_carlo(spec, cfg.sample_count, cfg.sample_seed);
}

namespace {

RandomScalar constant(double v) {
  return [v](SampleView) { return v; };
}

}  // namespace

CoefficientModel build_model(const RunConfig& cfg, const SampleSpace& space) {
  CoefficientModel m;
  m.name = cfg.model;
  if (cfg.model == "rotating_body") {
    m.eps = [](SampleView w) { return std::pow(10.0, w[0] - 16.0); };
    m.advection.push_back({constant(1.0), [](Point2 x) { return Point2{0.5 - x.y, x.x - 0.5}; },
                           [](Point2) { return 0.0; }});
    m.boundary_values = {{"boundary", 0.0}};
  } else if (cfg.model == "boundary_layer") {
    // k = E[y_2] makes the second advection term zero-mean
    const double k = space.weights().dot(space.samples().col(1));
    m.eps = [](SampleView w) { return 1.0 / w[0]; };
    m.advection.push_back({constant(1.0), [](Point2) { return Point2{1.0, 1.0}; }, [](Point2) { return 0.0; }});
    m.advection.push_back(
        {[k](SampleView w) { return w[1] - k; }, [](Point2 x) { return Point2{x.y, x.x}; }, [](Point2) { return 0.0; }});
    m.boundary_values = {{"D1", 1.0}, {"D2", 0.0}};
  } else {
    const double eps = cfg.eps, eps_fluct = cfg.eps_fluct, c = cfg.c, c_fluct = cfg.c_fluct;
    m.eps = [eps, eps_fluct](SampleView w) { return eps + eps_fluct * w[0]; };
    if (cfg.bx != 0.0 || cfg.by != 0.0) {
      const Point2 b{cfg.bx, cfg.by};
      m.advection.push_back({constant(1.0), [b](Point2) { return b; }, [](Point2) { return 0.0; }});
    }
    if (c != 0.0 || c_fluct != 0.0)
      m.reaction.push_back(
          {[c, c_fluct](SampleView w) { return c + c_fluct * w[w.size() - 1]; }, [](Point2) { return 1.0; }});
    if (cfg.f != 0.0) {
      const double f = cfg.f;
      m.forcing.push_back({[](double, SampleView) { return 1.0; }, [f](Point2) { return f; }});
    }
    m.boundary_values = {{"boundary", cfg.boundary_value}};
  }
  return m;
}

double slotted_cylinder(Point2 x) {
  const double r = std::hypot(x.x - 0.5, x.y - 0.75) / 0.15;
  return (r <= 1.0 && (std::abs(x.x - 0.5) >= 0.025 || x.y >= 0.85)) ? 1.0 : 0.0;
}

double hump(Point2 x) {
  const double r = std::hypot(x.x - 0.25, x.y - 0.5) / 0.15;
  return 0.25 * (1.0 + std::cos(std::numbers::pi * std::min(r, 1.0)));
}

double cone(Point2 x) {
  const double r = std::hypot(x.x - 0.5, x.y - 0.25) / 0.15;
  return 1.0 - std::min(r, 1.0);
}

DlrState build_initial_state(const RunConfig& cfg, const Mesh& mesh, const SampleSpace& space, const SpMat& mass) {
  const auto nh = static_cast<Eigen::Index>(mesh.num_vertices());
  const auto nc = static_cast<Eigen::Index>(space.count());
  const CoefficientModel model = build_model(cfg, space);
  const DirichletData bc = make_dirichlet(mesh, model.boundary_values);
  DlrState state;

  if (cfg.initial == "rotating_body") {
    const auto r = static_cast<Eigen::Index>(cfg.rank);
    Mat u(nh, 2), y(nc, 2);
    u.col(0) = interpolate(mesh, hump);
    u.col(1) = interpolate(mesh, cone);
    for (Eigen::Index i = 0; i < nc; ++i) {
      const auto w = space.sample(static_cast<std::size_t>(i));
      y(i, 0) = 2.0 * w[1] * std::cos(w[2]);
      y(i, 1) = 30.0 * w[2] * w[1] * w[1] * w[1];
    }
    // centre first, then orthonormalize
    const Eigen::RowVectorXd means = space.weights().transpose() * y;
    y.rowwise() -= means;
    state = init_from_modes(interpolate(mesh, slotted_cylinder), u.leftCols(r), y.leftCols(r), space);
  } else if (cfg.initial == "boundary_layer_snapshot") {
    if (cfg.bounds.size() < 4) throw ConfigError("boundary_layer_snapshot needs a four-dimensional parameter space");
    Mat snap(nh, nc);
    for (Eigen::Index v = 0; v < nh; ++v) {
      const Point2 x = mesh.vertices[static_cast<std::size_t>(v)];
      for (Eigen::Index i = 0; i < nc; ++i) {
        const auto w = space.sample(static_cast<std::size_t>(i));
        snap(v, i) = std::exp(std::cos(w[2] * x.x + w[3] * x.y));
      }
    }
    const Vec means = snap * space.weights();
    snap.colwise() -= means;
    const Vec shape = interpolate(mesh, [](Point2 x) {
      return 5.0 * std::sin(2.0 * std::numbers::pi * x.x) * std::sin(2.0 * std::numbers::pi * x.y);
    });
    snap = shape.asDiagonal() * snap;
    for (int v : mesh.boundary_vertices()) snap.row(v).setZero();
    SnapshotInit init = cfg.snapshot_tol > 0.0 ? init_from_snapshot_tol(snap, mass, space, cfg.snapshot_tol)
                                               : init_from_snapshot(snap, mass, space, cfg.rank);
    state = std::move(init.state);
    state.U0.setZero();
  } else {
    std::mt19937_64 rng(cfg.initial_seed);
    std::normal_distribution<double> normal;
    const int modes = 3;
    auto smooth = [&]() {
      Mat a(modes, modes);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = normal(rng);
      return interpolate(mesh, [a, modes](Point2 x) {
        double s = 0.0;
        for (int k = 0; k < modes; ++k)
          for (int l = 0; l < modes; ++l)
            s += a(k, l) * std::sin((k + 1) * std::numbers::pi * x.x) * std::sin((l + 1) * std::numbers::pi * x.y) /
                 ((k + 1) * (l + 1));
        return s;
      });
    };
    const auto r = static_cast<Eigen::Index>(cfg.rank);
    Vec u0 = smooth();
    Mat u(nh, r), y(nc, r);
    for (Eigen::Index k = 0; k < r; ++k) u.col(k) = smooth();
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = normal(rng);
    state = init_from_modes(u0, u, y, space);
  }
  for (std::size_t i = 0; i < bc.nodes.size(); ++i) state.U0[bc.nodes[i]] = bc.values[static_cast<Eigen::Index>(i)];
  validate(state, space, mass, mesh.boundary_vertices());
  return state;
}

double estimate_inverse_constant(const Mesh& mesh) {
  const auto quad = QuadratureRule::degree4();
  return estimate_inverse_constant(mesh, assemble_stiffness(mesh), assemble_mass(mesh, quad));
}

bool policy_needs_inverse_constant(const std::string& policy) {
  return policy == "coercivity" || policy == "semi_implicit";
}

std::vector<double> resolve_delta(const RunConfig& cfg, const Mesh& mesh, const ReactionAnalysis& analysis,
                                  double C_I) {
  StabilizationParams params;
  params.C_I = C_I;
  params.C_E = analysis.C_E;
  params.policy = cfg.delta_policy;
  if (cfg.delta_policy == "experiment") return delta_experiment(mesh);
  if (cfg.delta_policy == "coercivity") return cap_delta(delta_coercivity(mesh, analysis, params), delta_experiment(mesh));
  if (cfg.delta_policy == "semi_implicit")
    return cap_delta(delta_semi_implicit(mesh, analysis, params, cfg.dt), delta_experiment(mesh));
  return std::vector<double>(mesh.num_triangles(), cfg.delta_value);
}

// --- field dumps ---------------------------------------------------------------

void write_field_dump(std::ostream& out, const FieldDump& d) {
  const int n = d.n_per_side + 1;
  out << format_double(d.t) << ' ' << d.R << ' ' << d.n_per_side << ' ' << d.N_C << '\n';
  out << "samples";
  for (std::size_t s : d.samples) out << ' ' << s;
  out << '\n';
  for (Eigen::Index k = 0; k < d.fields.cols(); ++k) {
    for (int j = 0; j < n; ++j) {
      for (int i = 0; i < n; ++i) out << (i ? " " : "") << format_double(d.fields(j * n + i, k));
      out << '\n';
    }
  }
}

FieldDump read_field_dump(std::istream& in) {
  FieldDump d;
  std::string tok, line;
  if (!(in >> tok)) throw ConfigError("field dump: empty");
  d.t = parse_double(tok);
  if (!(in >> d.R >> d.n_per_side >> d.N_C)) throw ConfigError("field dump: bad header");
  std::getline(in, line);
  if (!std::getline(in, line)) throw ConfigError("field dump: missing sample line");
  std::istringstream s(line);
  if (!(s >> tok) || tok != "samples") throw ConfigError("field dump: missing sample line");
  std::size_t idx;
  while (s >> idx) d.samples.push_back(idx);
  const Eigen::Index nh = static_cast<Eigen::Index>(d.n_per_side + 1) * (d.n_per_side + 1);
  d.fields.resize(nh, static_cast<Eigen::Index>(d.samples.size()));
  for (Eigen::Index k = 0; k < d.fields.cols(); ++k)
    for (Eigen::Index v = 0; v < nh; ++v) {
      if (!(in >> tok)) throw ConfigError("field dump: truncated");
      d.fields(v, k) = parse_double(tok);
    }
  return d;
}

// --- batch run ---------------------------------------------------------------------

namespace {

nlohmann::ordered_json config_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  for (const auto& [section, fields] : schema())
    for (const Field& f : fields) j[section][f.key] = f.write(cfg);
  return j;
}

std::vector<std::size_t> resolve_samples(const std::vector<std::size_t>& indices,
                                         const std::vector<std::vector<double>>& points, const SampleSpace& space) {
  std::vector<std::size_t> out;
  for (std::size_t i : indices) {
    if (i >= space.count()) throw ConfigError("sample index " + std::to_string(i) + " out of range");
    out.push_back(i);
  }
  for (const auto& p : points) out.push_back(space.nearest(p));
  return out;
}

}  // namespace

RunOutcome run_from_config(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  RunOutcome outcome;
  nlohmann::ordered_json manifest;
  manifest["software"] = {{"name", "pgdlr"}, {"version", kVersion}};
  manifest["config"] = config_json(cfg);
  nlohmann::ordered_json summary;
  std::size_t current_step = 0;

  try {
    fs::create_directories(cfg.output_dir);
  } catch (const fs::filesystem_error& e) {
    outcome.exit_code = 1;
    outcome.message = e.what();
    return outcome;
  }
  const fs::path dir(cfg.output_dir);

  try {
    check_config(cfg);
    const Mesh mesh = build_mesh(cfg);
    const SampleSpace space = build_space(cfg);
    const CoefficientModel model = build_model(cfg, space);
    const ReactionAnalysis analysis = analyze_reaction(model, mesh, space);
    const Scheme scheme = parse_scheme(cfg.scheme);
    const bool want_ledger = cfg.bound_ledger && scheme != Scheme::explicit_euler;
    std::optional<double> C_I;
    if (policy_needs_inverse_constant(cfg.delta_policy) || want_ledger) C_I = estimate_inverse_constant(mesh);

    SchemeConfig scfg;
    scfg.scheme = scheme;
    scfg.stabilization = parse_stabilization(cfg.stabilization);
    scfg.dt = cfg.dt;
    scfg.delta = resolve_delta(cfg, mesh, analysis, C_I.value_or(1.0));
    scfg.max_condition = cfg.max_condition;
    scfg.blowup_factor = cfg.blowup_factor;
    if (cfg.tangent_residual && space.count() > 64)
      throw ConfigError("tangent residual needs at most 64 samples");

    const Operators ops(mesh, model, space, scfg);
    const NormEvaluator norms(ops, analysis);
    const DlrState initial = build_initial_state(cfg, mesh, space, ops.mean_blocks().mass);
    const PecletReport peclet = local_peclet(model, mesh, space);

    const std::vector<double>& delta = ops.config().delta;
    summary["N_h"] = mesh.num_vertices();
    summary["N_C"] = space.count();
    summary["R"] = initial.rank();
    summary["dt"] = cfg.dt;
    summary["T"] = cfg.T;
    summary["steps"] = step_count(0.0, cfg.T, cfg.dt);
    summary["delta_min"] = *std::min_element(delta.begin(), delta.end());
    summary["delta_max"] = *std::max_element(delta.begin(), delta.end());
    if (C_I) summary["C_I"] = *C_I;
    summary["eps_hat"] = analysis.eps_hat;
    summary["C_E"] = analysis.C_E;
    summary["nu"] = analysis.nu + 0.0;  // no negative zero
    summary["mu0"] = analysis.mu0;
    summary["max_peclet"] = peclet.max_peclet;
    summary["advection_dominated"] = peclet.advection_dominated;

    std::optional<StochasticityReport> stochasticity;
    if (want_ledger && scheme == Scheme::semi_implicit) {
      stochasticity = check_moderate_stochasticity(model, analysis, space, mesh);
      summary["moderate_stochasticity"] = stochasticity->holds();
    }

    outcome.tracked = resolve_samples(cfg.track_samples, cfg.track_points, space);
    const std::vector<std::size_t> dumped = resolve_samples(cfg.dump_samples, cfg.dump_points, space);
    std::set<std::size_t> dump_steps;
    for (double t : cfg.dump_times) dump_steps.insert(static_cast<std::size_t>(std::llround(t / cfg.dt)));

    std::ofstream norms_csv(dir / "norms.csv");
    std::ofstream md_csv(dir / "md.csv");
    write_report_header(norms_csv);
    md_csv << "step,t";
    for (std::size_t i : outcome.tracked) md_csv << ",sample_" << i;
    md_csv << '\n';

    BoundInputs bounds;
    bounds.mesh = &mesh;
    bounds.analysis = analysis;
    bounds.delta = delta;
    bounds.C_I = C_I.value_or(1.0);
    bounds.dt = cfg.dt;
    bounds.forcing_zero = !ops.has_forcing();
    bounds.grad0_sq = norms.grad_sq(initial);
    bounds.mu0_sq = norms.mu_sq(initial);
    bounds.l2_sq.push_back(norms.l2_sq(initial));
    bounds.stochasticity = stochasticity;

    auto record = [&](std::size_t n, const DlrState& state, const StepReport& report) {
      write_report_row(norms_csv, report);
      outcome.reports.push_back(report);
      std::vector<double> md;
      md_csv << n << ',' << format_double(state.t);
      for (std::size_t i : outcome.tracked) {
        md.push_back(md_metric(evaluate_realization(state, i)));
        md_csv << ',' << format_double(md.back());
      }
      md_csv << '\n';
      outcome.md.push_back(std::move(md));
      if (dump_steps.count(n) && !dumped.empty()) {
        FieldDump d;
        d.t = state.t;
        d.R = state.rank();
        d.n_per_side = mesh.n_per_side;
        d.N_C = space.count();
        d.samples = dumped;
        d.fields.resize(initial.U0.size(), static_cast<Eigen::Index>(dumped.size()));
        for (std::size_t k = 0; k < dumped.size(); ++k)
          d.fields.col(static_cast<Eigen::Index>(k)) = evaluate_realization(state, dumped[k]);
        std::ofstream out(dir / ("field_" + std::to_string(n) + ".txt"));
        write_field_dump(out, d);
      }
    };

    record(0, initial, make_step_report(0, initial, StepInfo{}, norms));
    const DlrState final_state = run(initial, ops, cfg.T, [&](const StepResult& r, const DlrState& previous) {
      current_step = r.info.index;
      StepReport report = make_step_report(r.info.index, r.state, r.info, norms);
      if (cfg.tangent_residual) report.tangent_residual = check_tangent_residual(previous, r.U_tilde, r.Y_tilde, ops);
      bounds.l2_sq.push_back(report.l2 * report.l2);
      bounds.supg_sq.push_back(norms.supg_sq(r.state));
      bounds.f_sq.push_back(norms.forcing_sq(ops.forcing_time(previous.t)));
      record(r.info.index, r.state, report);
    });
    bounds.T = final_state.t;
    current_step = 0;
    {
      std::ofstream out(dir / "final_state.bin", std::ios::binary);
      write_checkpoint(out, final_state, mesh.n_per_side);
    }

    if (want_ledger) {
      const Theorem theorem = scheme == Scheme::semi_implicit ? Theorem::si_stab : Theorem::im_stab;
      const BoundLedger ledger = evaluate_bound(bounds, theorem, select_case(bounds));
      outcome.ledgers.push_back(ledger);
      std::ofstream ledger_csv(dir / "ledger.csv");
      write_ledger_header(ledger_csv);
      write_ledger_row(ledger_csv, ledger);
      summary["ledger"] = ledger.outcome();
      if (ledger.applicable && !ledger.pass) {
        outcome.exit_code = 3;
        outcome.message = "bound ledger FAIL (" + to_string(theorem) + " case " + to_string(ledger.bound_case) + ")";
      }
    }
  } catch (const ConfigError& e) {
    outcome.exit_code = 1;
    outcome.message = e.what();
  } catch (const DiagnosticError& e) {
    outcome.exit_code = 3;
    outcome.message = e.what();
  } catch (const NumericalError& e) {
    outcome.exit_code = 2;
    outcome.message = e.what();
    outcome.failing_step = current_step + 1;
  } catch (const std::exception& e) {
    outcome.exit_code = 2;
    outcome.message = e.what();
  }

  manifest["summary"] = summary;
  manifest["status"] = outcome.exit_code == 0 ? "ok" : "error";
  manifest["exit_code"] = outcome.exit_code;
  if (!outcome.message.empty()) manifest["message"] = outcome.message;
  if (outcome.failing_step) manifest["failing_step"] = *outcome.failing_step;
  std::ofstream(dir / "run.json") << manifest.dump(2) << '\n';
  return outcome;
}

}  // namespace pgdlr
