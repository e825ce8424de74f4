#include "lvcal/cli.hpp"

#include <filesystem>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "lvcal/calibrators.hpp"
#include "lvcal/dataset.hpp"
#include "lvcal/error.hpp"
#include "lvcal/metrics.hpp"

namespace lvcal {

namespace {

namespace fs = std::filesystem;

// Solver settings as they appear in config files and result.json.
Json default_config() {
  const SolverOptions d;
  return {{"algorithm", nullptr},
          {"max_iterations", d.max_iterations},
          {"update_tolerance", d.update_tolerance},
          {"cost_tolerance", d.cost_tolerance},
          {"initial_damping", d.initial_damping},
          {"damping_increase", d.damping_up},
          {"damping_decrease", d.damping_down},
          {"max_rejections", d.max_rejections},
          {"ordering", "natural"},
          {"huber_threshold", 0.0},
          {"parallel", d.parallel}};
}

[[noreturn]] void config_fail(const Document& doc, const std::string& key, const std::string& why) {
  const auto it = doc.lines.find("/" + key);
  const int line = it == doc.lines.end() ? 1 : it->second;
  throw Error(ErrorCode::SchemaViolation, fmt::format("{}:{}: /{}: {}", doc.source, line, key, why));
}

// Overlays a config file onto `cfg`; keys and value types must match the defaults.
void apply_config_file(Json& cfg, const Document& doc) {
  if (!doc.json.is_object()) throw Error(ErrorCode::SchemaViolation, doc.source + ": expected a JSON object");
  for (const auto& [k, v] : doc.json.items()) {
    if (!cfg.contains(k)) config_fail(doc, k, "unknown field '" + k + "'");
    const Json& def = cfg[k];
    const bool ok = k == "algorithm" ? v.is_number_integer()
                    : def.is_boolean() ? v.is_boolean()
                    : def.is_string()  ? v.is_string()
                    : def.is_number_integer() ? v.is_number_integer()
                                              : v.is_number();
    if (!ok) config_fail(doc, k, "wrong type");
    cfg[k] = v;
  }
}

SolverOptions solver_options(const Json& cfg) {
  SolverOptions o;
  o.max_iterations = cfg["max_iterations"].get<int>();
  o.update_tolerance = cfg["update_tolerance"].get<double>();
  o.cost_tolerance = cfg["cost_tolerance"].get<double>();
  o.initial_damping = cfg["initial_damping"].get<double>();
  o.damping_up = cfg["damping_increase"].get<double>();
  o.damping_down = cfg["damping_decrease"].get<double>();
  o.max_rejections = cfg["max_rejections"].get<int>();
  const std::string ordering = cfg["ordering"].get<std::string>();
  if (ordering == "natural") {
    o.ordering = Ordering::Natural;
  } else if (ordering == "amd") {
    o.ordering = Ordering::Amd;
  } else {
    throw Error(ErrorCode::InvalidArgument, "ordering must be 'natural' or 'amd'");
  }
  const double huber = cfg["huber_threshold"].get<double>();
  if (huber < 0.0) throw Error(ErrorCode::InvalidArgument, "huber_threshold must be non-negative");
  if (huber > 0.0) o.loss = RobustLoss{huber};
  o.parallel = cfg["parallel"].get<bool>();
  if (o.max_iterations < 1 || o.max_rejections < 1 || !(o.damping_up > 1.0) || !(o.damping_down > 1.0) ||
      !(o.initial_damping > 0.0) || o.update_tolerance < 0.0 || o.cost_tolerance < 0.0) {
    throw Error(ErrorCode::InvalidArgument, "solver settings out of range");
  }
  return o;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::DivergenceDetected:
    case ErrorCode::IndefiniteSystem:
    case ErrorCode::SingularWeight:
    case ErrorCode::AngleNearPi: return kExitSolver;
    default: return kExitData;
  }
}

fs::path stats_path_for(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".stats.json");
  return p;
}

std::vector<Submap> evaluation_submaps(const Scenario& data, const StoredResult& stored) {
  if (!stored.result.posterior_submaps) return data.submaps;
  const std::vector<Submap>& post = *stored.result.posterior_submaps;
  if (post.size() != data.submaps.size()) {
    throw Error(ErrorCode::InvalidArgument, "result and dataset disagree on the number of submaps");
  }
  std::vector<Submap> out = data.submaps;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (post[i].offsets.size() != out[i].observations.size()) {
      throw Error(ErrorCode::InvalidArgument, fmt::format("posterior submap {} does not match the dataset", i));
    }
    out[i].central = post[i].central;
    out[i].offsets = post[i].offsets;
  }
  return out;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Laser-to-vehicle extrinsic calibration"};
  app.name("lvcal");
  app.require_subcommand(1, 1);

  std::string spec_path, data_path, out_path, config_path, result_path, extrinsic_path, stats_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> alg, max_iterations, max_rejections, bins;
  std::optional<double> update_tol, cost_tol, damping, huber;
  std::optional<std::string> ordering;
  bool serial = false;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic patch-test dataset");
  sim->add_option("--spec", spec_path, "scenario spec JSON (defaults when absent)")->check(CLI::ExistingFile);
  sim->add_option("--seed", seed, "overrides the spec seed");
  sim->add_option("--out", out_path, "dataset JSON to write")->required();

  auto* cal = app.add_subcommand("calibrate", "estimate the extrinsic");
  cal->add_option("--alg", alg, "algorithm")->check(CLI::Range(1, 3));
  cal->add_option("--data", data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  cal->add_option("--out", out_path, "result JSON to write")->required();
  cal->add_option("--config", config_path, "solver config JSON")->check(CLI::ExistingFile);
  cal->add_option("--max-iterations", max_iterations);
  cal->add_option("--update-tolerance", update_tol);
  cal->add_option("--cost-tolerance", cost_tol);
  cal->add_option("--initial-damping", damping);
  cal->add_option("--max-rejections", max_rejections);
  cal->add_option("--ordering", ordering)->check(CLI::IsMember({"natural", "amd"}));
  cal->add_option("--huber", huber, "Huber threshold on whitened reprojection residuals; 0 disables");
  cal->add_flag("--serial", serial, "evaluate factors on one thread");

  auto* eval = app.add_subcommand("evaluate", "point disparity of the registered submaps");
  eval->add_option("--data", data_path, "dataset JSON")->required()->check(CLI::ExistingFile);
  eval->add_option("--extrinsic", extrinsic_path, "result JSON; the dataset prior when absent")
      ->check(CLI::ExistingFile);
  eval->add_option("--out", out_path, "per-point CSV to write")->required();
  eval->add_option("--stats", stats_path, "stats JSON (default: <out>.stats.json)");
  eval->add_option("--bins", bins, "histogram bins")->check(CLI::PositiveNumber);

  auto* rep = app.add_subcommand("report", "summarize a calibration result");
  rep->add_option("--result", result_path, "result JSON")->required()->check(CLI::ExistingFile);

  auto* val = app.add_subcommand("validate", "check a dataset against the schema");
  val->add_option("--data", data_path, "dataset JSON")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*sim) {
      ScenarioSpec spec = spec_path.empty() ? ScenarioSpec{} : spec_from_json(load_document(spec_path));
      if (seed) spec.seed = *seed;
      const Scenario s = generate(spec);
      write_dataset(s, out_path);
      out << fmt::format("wrote {}: {} submaps, {} correspondences\n", out_path, s.submaps.size(),
                         s.correspondences.size());
    } else if (*cal) {
      Json cfg = default_config();
      if (!config_path.empty()) apply_config_file(cfg, load_document(config_path));
      if (alg) cfg["algorithm"] = *alg;
      if (max_iterations) cfg["max_iterations"] = *max_iterations;
      if (update_tol) cfg["update_tolerance"] = *update_tol;
      if (cost_tol) cfg["cost_tolerance"] = *cost_tol;
      if (damping) cfg["initial_damping"] = *damping;
      if (max_rejections) cfg["max_rejections"] = *max_rejections;
      if (ordering) cfg["ordering"] = *ordering;
      if (huber) cfg["huber_threshold"] = *huber;
      if (serial) cfg["parallel"] = false;
      if (cfg["algorithm"].is_null()) {
        err << "calibrate: --alg is required (or 'algorithm' in --config)\n";
        return kExitUsage;
      }
      const int a = cfg["algorithm"].get<int>();
      if (a < 1 || a > 3) {
        err << "calibrate: algorithm must be 1, 2 or 3\n";
        return kExitUsage;
      }
      // the third algorithm always factors with AMD
      if (a == 3) cfg["ordering"] = "amd";
      CalibrationOptions options;
      try {
        options.solver = solver_options(cfg);
      } catch (const Error& e) {
        err << "calibrate: " << e.what() << '\n';
        return kExitUsage;
      }

      const Scenario s = read_dataset(data_path);
      const CalibrationResult r = calibrate(a, s, options);
      Json echoed = cfg;
      echoed["data"] = data_path;
      echoed["config_file"] = config_path.empty() ? Json(nullptr) : Json(config_path);
      write_text(out_path, canonical_dump(result_json(r, s.prior, echoed)));
      out << report_update(r, s.prior);
      for (const std::string& w : r.warnings) err << "warning: " << w << '\n';
    } else if (*eval) {
      const Scenario s = read_dataset(data_path);
      StoredResult stored;
      stored.result.extrinsic = s.prior.mean;
      if (!extrinsic_path.empty()) stored = result_from_json(load_document(extrinsic_path));
      const std::vector<PointSet> sets = registered_submaps(evaluation_submaps(s, stored), stored.result.extrinsic);
      const DisparityReport d = point_disparity(sets, bins.value_or(kDefaultHistogramBins));
      std::ostringstream csv;
      write_disparity_csv(csv, sets, d);
      write_text(out_path, csv.str());
      write_text(stats_path.empty() ? stats_path_for(out_path) : fs::path(stats_path),
                 canonical_dump(disparity_stats_json(d)));
      out << fmt::format("points: {}\nmedian disparity: {:.4f} m\nmean disparity: {:.4f} m\n", d.per_point.size(),
                         d.median, d.mean);
    } else if (*rep) {
      const StoredResult stored = result_from_json(load_document(result_path));
      out << report_update(stored.result, stored.prior);
    } else if (*val) {
      const Scenario s = read_dataset(data_path);
      out << fmt::format("ok: {} submaps, {} correspondences{}\n", s.submaps.size(), s.correspondences.size(),
                         s.truth ? ", ground truth present" : "");
    }
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace lvcal
