// gamma-calc: command-line front end for the finite metric-measure calculus
// engine. Subcommands build reference spaces, apply first- and second-order
// operators, run the Hodge/Ricci/flow pipelines, evaluate the verification
// rule catalog, and drive the acceptance suite. Reports are JSON (CSV for
// convergence tables), carry a schema version and the resolved configuration,
// and contain no timing or environment data, so identical invocations render
// byte-identical artifacts.
//
// Exit codes: 0 success, 1 computation failure (including failed acceptance
// criteria and failed exact-class rules), 2 usage error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gammacalc/acceptance.hpp"
#include "gammacalc/builders.hpp"
#include "gammacalc/flow.hpp"
#include "gammacalc/hodge.hpp"
#include "gammacalc/ricci.hpp"
#include "gammacalc/verify.hpp"

namespace gc = gammacalc;
using nlohmann::json;

namespace {

constexpr const char* kSchemaVersion = "1.0";

struct Options {
  std::string space = "grid_torus:2,16";
  std::string gens = "default";  // default | coord | auto[:count]
  std::string field = "eigen:1";
  std::string rho0 = "bump";
  std::string rules = "all";
  std::string family = "torus";
  std::string res = "8,16,32,64";
  std::string out;
  std::string config;
  std::string suite = "primary";
  int degree = 1;
  int count = 4;
  int criterion = 0;  // 0 = all
  int steps = 0;      // 0 = choose from the CFL rate
  double horizon = 0.5;
  double n_param = 0.0;
  std::optional<double> k_ref;
  std::uint64_t seed = 1;
  bool exact = false;  // force the exact per-point curvature solve
};

// Settings given in the --config JSON object fill in for flags the user did
// not pass; explicit flags always win.
void merge_config(CLI::App& app, Options& o) {
  if (o.config.empty()) return;
  std::ifstream in(o.config);
  if (!in) throw gc::usage_error("config: cannot open " + o.config);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& err) {
    throw gc::usage_error("config: " + o.config + ": " + err.what());
  }
  if (!j.is_object()) throw gc::usage_error("config: top level must be an object");
  auto absent = [&](const char* flag) { return app.count(flag) == 0; };
  auto str = [&](const char* key, std::string& slot, const char* flag) {
    if (j.contains(key) && absent(flag)) slot = j.at(key).get<std::string>();
  };
  str("space", o.space, "--space");
  str("gens", o.gens, "--gens");
  str("field", o.field, "--field");
  str("rho0", o.rho0, "--rho0");
  str("rules", o.rules, "--rules");
  str("family", o.family, "--family");
  str("res", o.res, "--res");
  str("out", o.out, "--out");
  str("suite", o.suite, "--suite");
  if (j.contains("degree") && absent("--degree")) o.degree = j.at("degree").get<int>();
  if (j.contains("count") && absent("--count")) o.count = j.at("count").get<int>();
  if (j.contains("criterion") && absent("--criterion"))
    o.criterion = j.at("criterion").get<int>();
  if (j.contains("steps") && absent("--steps")) o.steps = j.at("steps").get<int>();
  if (j.contains("horizon") && absent("--horizon"))
    o.horizon = j.at("horizon").get<double>();
  if (j.contains("n_param") && absent("--n-param"))
    o.n_param = j.at("n_param").get<double>();
  if (j.contains("k") && absent("--k")) o.k_ref = j.at("k").get<double>();
  if (j.contains("seed") && absent("--seed"))
    o.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("exact") && absent("--exact")) o.exact = j.at("exact").get<bool>();
}

// The resolved settings relevant to a subcommand, echoed into its report.
json echo_config(const Options& o, std::initializer_list<const char*> keys) {
  json c;
  for (const char* key : keys) {
    std::string k = key;
    if (k == "space") c["space"] = o.space;
    else if (k == "gens") c["gens"] = o.gens;
    else if (k == "field") c["field"] = o.field;
    else if (k == "rho0") c["rho0"] = o.rho0;
    else if (k == "rules") c["rules"] = o.rules;
    else if (k == "family") c["family"] = o.family;
    else if (k == "res") c["res"] = o.res;
    else if (k == "suite") c["suite"] = o.suite;
    else if (k == "degree") c["degree"] = o.degree;
    else if (k == "count") c["count"] = o.count;
    else if (k == "criterion") c["criterion"] = o.criterion;
    else if (k == "steps") c["steps"] = o.steps;
    else if (k == "horizon") c["horizon"] = o.horizon;
    else if (k == "n_param") c["n_param"] = o.n_param;
    else if (k == "k") c["k"] = o.k_ref ? json(*o.k_ref) : json();
    else if (k == "seed") c["seed"] = o.seed;
    else if (k == "exact") c["exact"] = o.exact;
  }
  return c;
}

json envelope(const char* schema, const Options& o,
              std::initializer_list<const char*> keys) {
  json j;
  j["schema"] = schema;
  j["schema_version"] = kSchemaVersion;
  j["config"] = echo_config(o, keys);
  return j;
}

void emit(const json& j, const std::string& out) {
  std::string text = j.dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!f) throw gc::usage_error("cannot write " + out);
    f << text;
  }
}

void emit_text(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out);
    if (!f) throw gc::usage_error("cannot write " + out);
    f << text;
  }
}

json vec_to_json(const gc::Vec& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

json field_stats(const gc::FiniteMMSpace& s, const gc::ScalarField& f) {
  json j;
  j["min"] = f.size() ? f.minCoeff() : 0.0;
  j["max"] = f.size() ? f.maxCoeff() : 0.0;
  j["l1"] = gc::integrate(s, f.cwiseAbs());
  j["l2"] = gc::norm_m(s, f);
  return j;
}

// Field specs: eigen:k (k-th Laplacian eigenfunction, 0 = constant),
// coord:a (builder coordinate field), const:v, file:path (JSON array).
gc::ScalarField parse_field(const gc::FiniteMMSpace& s, const std::string& spec,
                            std::uint64_t seed) {
  std::string name = spec, arg;
  if (auto colon = spec.find(':'); colon != std::string::npos) {
    name = spec.substr(0, colon);
    arg = spec.substr(colon + 1);
  }
  if (name == "eigen") {
    int k = arg.empty() ? 1 : std::stoi(arg);
    if (k < 0) throw gc::usage_error("field: eigen index must be nonnegative");
    gc::EigenFunctions eig =
        gc::laplacian_eigenfunctions(s, std::min(s.n, k + 1), seed);
    if (k >= eig.fields.cols())
      throw gc::usage_error("field: eigen index exceeds space size");
    return eig.fields.col(k);
  }
  if (name == "coord") {
    int a = arg.empty() ? 0 : std::stoi(arg);
    if (a < 0 || a >= s.coord_fields.cols())
      throw gc::usage_error("field: coordinate index out of range");
    return s.coord_fields.col(a);
  }
  if (name == "const") {
    double v = arg.empty() ? 1.0 : std::stod(arg);
    return gc::ScalarField::Constant(s.n, v);
  }
  if (name == "file") {
    std::ifstream in(arg);
    if (!in) throw gc::usage_error("field: cannot open " + arg);
    json j = json::parse(in);
    auto vals = j.get<std::vector<double>>();
    if (static_cast<int>(vals.size()) != s.n)
      throw gc::usage_error("field: length does not match space");
    return Eigen::Map<gc::Vec>(vals.data(), s.n);
  }
  throw gc::usage_error("field: unknown spec '" + spec + "'");
}

gc::CotangentPtr make_cotangent(const gc::SpacePtr& sp, const std::string& gens) {
  std::string name = gens, arg;
  if (auto colon = gens.find(':'); colon != std::string::npos) {
    name = gens.substr(0, colon);
    arg = gens.substr(colon + 1);
  }
  if (name == "coord" ||
      (name == "default" && sp->coord_fields.cols() > 0))
    return gc::build_cotangent(sp, sp->coord_fields);
  if (name == "auto" || name == "default")
    return gc::build_cotangent_auto(sp, arg.empty() ? 0 : std::stoi(arg));
  throw gc::usage_error("gens: unknown spec '" + gens + "'");
}

std::vector<gc::RuleId> parse_rules(const std::string& spec) {
  if (spec == "all") return gc::Verifier::all_rules();
  if (spec == "exact") return gc::Verifier::rules_of_class(gc::RuleClass::exact);
  if (spec == "diffusion")
    return gc::Verifier::rules_of_class(gc::RuleClass::diffusion);
  std::vector<gc::RuleId> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(gc::rule_from_name(tok));
  if (out.empty()) throw gc::usage_error("rules: empty selection");
  return out;
}

std::vector<int> parse_res(const std::string& spec) {
  std::vector<int> out;
  std::stringstream ss(spec);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
  if (out.size() < 3) throw gc::usage_error("res: need at least 3 resolutions");
  return out;
}

// ---- subcommands ---------------------------------------------------------

int cmd_build(const Options& o) {
  gc::FiniteMMSpace s = gc::build_space(o.space);
  json j = envelope("space", o, {"space"});
  j["space"] = gc::space_to_json(s);
  j["n"] = s.n;
  j["label"] = s.label;
  j["intrinsic_dim"] = s.intrinsic_dim;
  emit(j, o.out);
  return 0;
}

int cmd_d(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  gc::ScalarField f = parse_field(*sp, o.field, o.seed);
  gc::Section df = gc::differential_projected(*ct, f);
  gc::ScalarField nf = gc::pointwise_norm(df);
  gc::Vec gff = gc::carre_du_champ(*sp, f, f);
  double consistency =
      (nf.cwiseProduct(nf) - gff).cwiseAbs().maxCoeff() /
      std::max(gff.maxCoeff(), gc::tol::scale_floor);

  json j = envelope("differential", o, {"space", "gens", "field", "seed"});
  j["dim_loc"] = std::vector<int>(ct->dim_loc.data(),
                                  ct->dim_loc.data() + ct->dim_loc.size());
  j["pointwise_norm"] = field_stats(*sp, nf);
  j["norm_consistency"] = consistency;
  j["module_norm"] = gc::module_norm(df);
  if (sp->n <= 512) j["section"] = gc::section_to_json(df);
  emit(j, o.out);
  return 0;
}

int cmd_hessian(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  gc::SecondOrder so(ct);
  gc::ScalarField f = parse_field(*sp, o.field, o.seed);
  gc::Hessian h = so.hessian(f);
  gc::ScalarField hs = gc::hs_norm(h.tensor);
  gc::Vec lf = gc::apply_generator(*sp, f);
  double num = gc::integrate(*sp, hs.cwiseProduct(hs));
  double den = gc::inner_m(*sp, lf, lf);

  json j = envelope("hessian", o, {"space", "gens", "field", "seed"});
  j["hs_norm"] = field_stats(*sp, hs);
  j["reconstruction_residual"] = field_stats(*sp, h.residual);
  j["hessian_energy"] = num;
  j["laplacian_energy"] = den;
  j["energy_ratio"] = num / std::max(den, gc::tol::scale_floor);
  emit(j, o.out);
  return 0;
}

int cmd_covd(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  gc::SecondOrder so(ct);
  gc::ScalarField g = parse_field(*sp, o.field, o.seed);
  gc::Section x = gc::differential_projected(*ct, g);
  gc::TensorSection nx = so.covariant_derivative(x);
  gc::ScalarField hs = gc::hs_norm(nx);
  gc::ScalarField divx = gc::divergence(*ct, x);
  gc::ScalarField trace_defect(sp->n);
  for (int i = 0; i < sp->n; ++i)
    trace_defect(i) = nx.coeffs[i].trace() - divx(i);

  json j = envelope("covariant_derivative", o, {"space", "gens", "field", "seed"});
  j["hs_norm"] = field_stats(*sp, hs);
  j["trace_defect"] = field_stats(*sp, trace_defect);
  j["field_norm2"] = gc::integrate(*sp, gc::pointwise_norm(x).array().square().matrix());
  emit(j, o.out);
  return 0;
}

int cmd_hodge(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  auto so = std::make_shared<const gc::SecondOrder>(ct);
  auto h = std::make_shared<const gc::HodgeComplex>(so);
  if (o.degree < 0 || o.degree > h->max_degree())
    throw gc::usage_error("hodge: degree out of range for this space");
  gc::HodgeReport rep = h->harmonic_basis(o.degree, o.count, nullptr, o.seed);

  json j = envelope("hodge", o, {"space", "gens", "degree", "count", "seed"});
  j["degree"] = rep.degree;
  j["betti_eigen"] = rep.betti_eigen;
  j["betti_rank"] = rep.betti_rank;
  j["eigenvalues"] = vec_to_json(rep.eigenvalues);
  j["gap_ratio"] = rep.gap_ratio;
  j["d2_defect"] = rep.d2_defect;
  j["inconclusive"] = rep.inconclusive;
  j["max_degree"] = h->max_degree();
  emit(j, o.out);
  return 0;
}

int cmd_ricci(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  auto so = std::make_shared<const gc::SecondOrder>(ct);
  auto h = std::make_shared<const gc::HodgeComplex>(so);
  gc::RicciOps ops(h);
  double k = o.k_ref ? *o.k_ref
                     : gc::curvature_estimate(*sp, 0.0, sp->n).k_star;
  std::vector<gc::Section> fields = gc::auto_sample_fields(*so, o.count, o.seed);
  gc::RicciBoundReport br = ops.ricci_bound_report(fields, k);

  gc::EigenFunctions eig = gc::laplacian_eigenfunctions(*sp, std::min(sp->n, 3), o.seed);
  gc::ScalarField fa = eig.fields.col(std::min<int>(1, eig.fields.cols() - 1));
  gc::ScalarField fb = eig.fields.col(std::min<int>(2, eig.fields.cols() - 1));
  gc::KeyLemmaReport kr = ops.key_lemma_report(
      {fa}, {gc::ScalarField::Ones(sp->n)}, {fb}, k);

  json j = envelope("ricci", o, {"space", "gens", "count", "k", "seed"});
  j["k_reference"] = br.k_reference;
  j["K_ric"] = br.k_ric_min;
  json rows = json::array();
  for (const auto& e : br.fields) {
    json r;
    r["k_ric"] = e.k_ric;
    r["field_norm2"] = e.field_norm2;
    r["energy_c"] = e.energy_c;
    r["energy_h"] = e.energy_h;
    r["eh_ec_slack"] = e.eh_ec_slack;
    r["tv_total"] = e.tv_total;
    r["tv_bound"] = e.tv_bound;
    r["tv_slack"] = e.tv_slack;
    rows.push_back(r);
  }
  j["fields"] = rows;
  j["violation_points"] = kr.violation_points;
  j["violation_mass"] = kr.violation_mass;
  j["bochner_violation_mass"] = kr.bochner_violation_mass;
  emit(j, o.out);
  return 0;
}

int cmd_curvature(const Options& o) {
  gc::FiniteMMSpace s = gc::build_space(o.space);
  const int cap = 2000;
  gc::CurvatureEstimate est;
  if (o.exact || s.n <= cap) {
    est = gc::curvature_estimate(s, o.n_param, s.n);
  } else {
    // Restricted pencil over generators and their pairwise products; this
    // can only raise the minimum, and the report says so.
    gc::Mat gens = s.coord_fields.cols() > 0 ? s.coord_fields
                                             : gc::auto_generators(s);
    const int r = static_cast<int>(gens.cols());
    gc::Mat fields(s.n, r + r * (r + 1) / 2);
    int col = 0;
    for (int a = 0; a < r; ++a) fields.col(col++) = gens.col(a);
    for (int a = 0; a < r; ++a)
      for (int b = a; b < r; ++b)
        fields.col(col++) = gens.col(a).cwiseProduct(gens.col(b));
    est = gc::curvature_estimate(s, o.n_param, cap, &fields);
  }

  json j = envelope("curvature", o, {"space", "n_param", "exact"});
  j["k_star"] = est.k_star;
  j["method"] = est.method;
  j["upper_bound"] = est.upper_bound;
  j["n_param"] = est.n_param;
  j["k_field"] = field_stats(s, est.k_field);
  emit(j, o.out);
  return 0;
}

int cmd_flow(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  gc::ScalarField g = parse_field(*sp, o.field, o.seed);
  gc::Section x = gc::differential_projected(*ct, g);

  gc::ScalarField rho0;
  if (o.rho0 == "bump") {
    // Uniform density plus a normalized copy of the potential keeps the
    // initial condition strictly positive.
    double peak = std::max(g.cwiseAbs().maxCoeff(), gc::tol::scale_floor);
    rho0 = gc::ScalarField::Ones(sp->n) + 0.5 * g / peak;
  } else {
    rho0 = parse_field(*sp, o.rho0, o.seed);
  }

  double rate = gc::detail::transport_op(*ct, x).max_rate;
  int steps = o.steps > 0
                  ? o.steps
                  : std::max(4, static_cast<int>(std::ceil(o.horizon * rate / 0.85)));
  gc::DensityCurve curve = gc::lagrangian_flow(ct, {x}, rho0, o.horizon, steps);
  gc::FlowDerivativeReport fd = gc::flow_derivative_check(curve, g);

  double worst_ratio = 0.0;
  for (size_t k = 0; k < curve.compression.size(); ++k)
    worst_ratio = std::max(worst_ratio, curve.compression[k] / curve.bound[k]);

  json j = envelope("flow", o,
                    {"space", "gens", "field", "rho0", "horizon", "steps", "seed"});
  j["steps"] = steps;
  j["cfl"] = curve.cfl;
  j["max_mass_drift"] = curve.max_mass_drift;
  j["final_compression"] = curve.compression.back();
  j["final_bound"] = curve.bound.back();
  j["worst_compression_ratio"] = worst_ratio;
  j["derivative_max_residual"] = fd.max_residual;
  j["derivative_mean_residual"] = fd.mean_residual;
  j["derivative_scale"] = fd.scale;
  emit(j, o.out);
  return 0;
}

int cmd_verify(const Options& o) {
  auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::build_space(o.space));
  gc::CotangentPtr ct = make_cotangent(sp, o.gens);
  auto so = std::make_shared<const gc::SecondOrder>(ct);
  gc::Verifier v(so);
  std::vector<gc::RuleId> rules = parse_rules(o.rules);
  std::vector<gc::DiagnosticReport> reports = v.run_rules(rules);

  bool all_passed = true;
  json rows = json::array();
  for (const auto& r : reports) {
    json row;
    row["rule"] = r.name;
    row["class"] = r.cls == gc::RuleClass::exact ? "exact" : "diffusion";
    row["l1"] = r.l1;
    row["l2"] = r.l2;
    row["linf"] = r.linf;
    row["scale"] = r.scale;
    row["relative"] = r.relative;
    row["violation_mass"] = r.violation_mass;
    row["passed"] = r.passed;
    if (!r.detail.empty()) row["detail"] = r.detail;
    rows.push_back(row);
    all_passed = all_passed && r.passed;
  }
  json j = envelope("verify", o, {"space", "gens", "rules", "seed"});
  j["rules"] = rows;
  j["all_passed"] = all_passed;
  emit(j, o.out);
  return all_passed ? 0 : 1;
}

int cmd_study(const Options& o) {
  std::vector<int> res = parse_res(o.res);
  std::vector<gc::RuleId> rules = parse_rules(o.rules);
  std::function<std::shared_ptr<const gc::SecondOrder>(int)> family;
  if (o.family == "torus") {
    family = [](int r) {
      auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::grid_torus(2, r));
      return std::make_shared<const gc::SecondOrder>(
          gc::build_cotangent(sp, sp->coord_fields));
    };
  } else if (o.family == "cycle") {
    family = [](int r) {
      auto sp = std::make_shared<const gc::FiniteMMSpace>(gc::cycle_space(r));
      return std::make_shared<const gc::SecondOrder>(gc::build_cotangent_auto(sp));
    };
  } else {
    throw gc::usage_error("study: unknown family '" + o.family + "'");
  }
  gc::StudyTable table = gc::convergence_study(family, res, rules);

  std::ostringstream csv;
  csv << "rule";
  for (int r : table.resolutions) csv << ",res_" << r;
  csv << ",order,exact_floor,monotone\n";
  csv << std::setprecision(12);
  for (const auto& row : table.rows) {
    csv << row.rule;
    for (double v : row.residuals) csv << "," << v;
    csv << ",";
    if (row.exact_floor)
      csv << "exact";
    else if (std::isnan(row.order))
      csv << "nan";
    else
      csv << row.order;
    csv << "," << (row.exact_floor ? 1 : 0) << "," << (row.monotone ? 1 : 0)
        << "\n";
  }
  emit_text(csv.str(), o.out);
  return 0;
}

int cmd_accept(const Options& o) {
  if (o.suite != "primary")
    throw gc::usage_error("accept: unknown suite '" + o.suite + "'");
  gc::acceptance::PrimarySuite suite(o.seed);
  std::vector<gc::acceptance::CriterionResult> rows;
  if (o.criterion > 0) {
    rows.push_back(suite.run_criterion(o.criterion));
  } else {
    rows = suite.run_all();
  }
  std::string report = gc::acceptance::render_report(rows, o.seed);
  std::cout << report;
  if (!o.out.empty()) emit_text(report, o.out);
  for (const auto& r : rows)
    if (!r.passed) return 1;
  return 0;
}

int cmd_schema(const Options& o) {
  auto obj = [](std::initializer_list<std::pair<const char*, const char*>> fields) {
    json props;
    for (const auto& [name, type] : fields) props[name] = {{"type", type}};
    return json{{"type", "object"}, {"properties", props}};
  };
  json j;
  j["schema"] = "schemas";
  j["schema_version"] = kSchemaVersion;
  j["reports"] = {
      {"space", obj({{"n", "integer"}, {"label", "string"},
                     {"intrinsic_dim", "integer"}, {"space", "object"}})},
      {"differential", obj({{"dim_loc", "array"}, {"pointwise_norm", "object"},
                            {"norm_consistency", "number"},
                            {"module_norm", "number"}})},
      {"hessian", obj({{"hs_norm", "object"},
                       {"reconstruction_residual", "object"},
                       {"hessian_energy", "number"},
                       {"laplacian_energy", "number"},
                       {"energy_ratio", "number"}})},
      {"covariant_derivative", obj({{"hs_norm", "object"},
                                    {"trace_defect", "object"},
                                    {"field_norm2", "number"}})},
      {"hodge", obj({{"degree", "integer"}, {"betti_eigen", "integer"},
                     {"betti_rank", "integer"}, {"eigenvalues", "array"},
                     {"gap_ratio", "number"}, {"d2_defect", "number"},
                     {"inconclusive", "boolean"}})},
      {"ricci", obj({{"K_ric", "number"}, {"k_reference", "number"},
                     {"fields", "array"}, {"violation_points", "array"},
                     {"violation_mass", "number"}})},
      {"curvature", obj({{"k_star", "number"}, {"method", "string"},
                         {"upper_bound", "boolean"}, {"n_param", "number"},
                         {"k_field", "object"}})},
      {"flow", obj({{"steps", "integer"}, {"cfl", "number"},
                    {"max_mass_drift", "number"},
                    {"final_compression", "number"}, {"final_bound", "number"},
                    {"worst_compression_ratio", "number"},
                    {"derivative_max_residual", "number"}})},
      {"verify", obj({{"rules", "array"}, {"all_passed", "boolean"}})},
  };
  j["common"] = {{"schema", "string"}, {"schema_version", "string"},
                 {"config", "object"}};
  emit(j, o.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gamma-calc: first- and second-order calculus on finite "
               "metric measure spaces"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--space", o.space, "space spec, e.g. grid_torus:2,32");
    sub->add_option("--gens", o.gens, "generator frame: default|coord|auto[:k]");
    sub->add_option("--seed", o.seed, "random seed recorded in the report");
    sub->add_option("--out", o.out, "output path (stdout when omitted)");
    sub->add_option("--config", o.config, "JSON config merged under flags");
    return sub;
  };

  auto* build = add_common(app.add_subcommand("build", "build a space and write it"));
  auto* d = add_common(app.add_subcommand("d", "differential of a scalar field"));
  d->add_option("--field", o.field, "field spec: eigen:k|coord:a|const:v|file:p");
  auto* hessian = add_common(app.add_subcommand("hessian", "Hessian reconstruction"));
  hessian->add_option("--field", o.field, "field spec");
  auto* covd = add_common(
      app.add_subcommand("covd", "covariant derivative of a gradient field"));
  covd->add_option("--field", o.field, "potential of the field");
  auto* hodge = add_common(app.add_subcommand("hodge", "harmonic forms and Betti numbers"));
  hodge->add_option("--degree", o.degree, "form degree");
  hodge->add_option("--count", o.count, "eigenpair count hint");
  auto* ricci = add_common(app.add_subcommand("ricci", "Ricci bound report"));
  ricci->add_option("--count", o.count, "number of sample fields");
  ricci->add_option("--k", o.k_ref, "curvature reference (default: computed K*)");
  auto* curvature = add_common(
      app.add_subcommand("curvature", "Bakry-Emery curvature lower bound"));
  curvature->add_option("--n-param", o.n_param, "dimension bound N, 0 = infinity");
  curvature->add_flag("--exact", o.exact, "force the exact per-point solve");
  auto* flow = add_common(app.add_subcommand("flow", "transport along a gradient field"));
  flow->add_option("--field", o.field, "potential of the drift field");
  flow->add_option("--rho0", o.rho0, "initial density spec or 'bump'");
  flow->add_option("--horizon", o.horizon, "transport horizon");
  flow->add_option("--steps", o.steps, "step count, 0 = from the CFL rate");
  auto* verify = add_common(app.add_subcommand("verify", "run verification rules"));
  verify->add_option("--rules", o.rules, "all|exact|diffusion|name[,name...]");
  auto* study = app.add_subcommand("study", "convergence study over a family");
  study->add_option("--family", o.family, "torus|cycle");
  study->add_option("--res", o.res, "comma-separated resolutions");
  study->add_option("--rules", o.rules, "rule selection as in verify");
  study->add_option("--out", o.out, "CSV output path");
  study->add_option("--config", o.config, "JSON config merged under flags");
  auto* accept = app.add_subcommand("accept", "run the acceptance suite");
  accept->add_option("--suite", o.suite, "suite name (primary)");
  accept->add_option("--criterion", o.criterion, "single criterion index, 0 = all");
  accept->add_option("--seed", o.seed, "suite seed");
  accept->add_option("--out", o.out, "also write the report here");
  accept->add_option("--config", o.config, "JSON config merged under flags");
  auto* schema = app.add_subcommand("schema", "emit report schemas");
  schema->add_option("--out", o.out, "output path");

  try {
    app.parse(argc, argv);
    CLI::App* active = app.get_subcommands().front();
    merge_config(*active, o);
    if (active == build) return cmd_build(o);
    if (active == d) return cmd_d(o);
    if (active == hessian) return cmd_hessian(o);
    if (active == covd) return cmd_covd(o);
    if (active == hodge) return cmd_hodge(o);
    if (active == ricci) return cmd_ricci(o);
    if (active == curvature) return cmd_curvature(o);
    if (active == flow) return cmd_flow(o);
    if (active == verify) return cmd_verify(o);
    if (active == study) return cmd_study(o);
    if (active == accept) return cmd_accept(o);
    if (active == schema) return cmd_schema(o);
    throw gc::usage_error("unknown subcommand");
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const gc::usage_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
