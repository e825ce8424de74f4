#include "lvcal/dataset.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <vector>

#include <fmt/format.h>

#include "lvcal/error.hpp"

namespace lvcal {

namespace {

constexpr double kRotationTolerance = 1e-6;

// ---------------------------------------------------------------- writing

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, "cannot serialize a non-finite number");
  std::string s = fmt::format("{:.17g}", v);
  // keep floats distinguishable from integers so -0.0 and 1.0 survive a read
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

bool is_scalar(const Json& j) { return !j.is_object() && !j.is_array(); }

void dump(const Json& j, int indent, std::string& out) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  switch (j.type()) {
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [k, v] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += pad + Json(k).dump() + ": ";
        dump(v, indent + 2, out);
      }
      out += "\n" + std::string(static_cast<std::size_t>(indent), ' ') + "}";
      return;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      const bool flat = std::all_of(j.begin(), j.end(), is_scalar);
      out += flat ? "[" : "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i > 0) out += flat ? ", " : ",\n";
        if (!flat) out += pad;
        dump(j[i], indent + 2, out);
      }
      if (!flat) out += "\n" + std::string(static_cast<std::size_t>(indent), ' ');
      out += "]";
      return;
    }
    case Json::value_t::number_float: out += format_double(j.get<double>()); return;
    case Json::value_t::number_integer: out += std::to_string(j.get<std::int64_t>()); return;
    case Json::value_t::number_unsigned: out += std::to_string(j.get<std::uint64_t>()); return;
    default: out += j.dump(); return;
  }
}

Json vec_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Json mat_json(const Eigen::MatrixXd& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) a.push_back(m(r, c));
  }
  return a;
}

Json timed_pose_json(const TimedPose& p) {
  Json j = to_json(p.pose);
  j["t"] = p.t;
  j["covariance"] = mat_json(p.covariance);
  return j;
}

Json trajectory_json(const Trajectory& t) {
  Json j = Json::array();
  for (const TimedPose& p : t.poses()) j.push_back(timed_pose_json(p));
  return j;
}

const char* kind_name(StateKind k) {
  switch (k) {
    case StateKind::Extrinsic: return "extrinsic";
    case StateKind::SubmapPose: return "submap_pose";
    case StateKind::VehiclePose: return "vehicle_pose";
    case StateKind::Velocity: return "velocity";
  }
  return "unknown";
}

// ---------------------------------------------------------------- reading

class Node {
 public:
  Node(const Json& j, std::string path, const Document& doc) : j_(&j), path_(std::move(path)), doc_(&doc) {}

  [[noreturn]] void fail(const std::string& reason, ErrorCode code = ErrorCode::SchemaViolation) const {
    throw Error(code, fmt::format("{}:{}: {}: {}", doc_->source, line(), path_.empty() ? "/" : path_, reason));
  }

  const Json& json() const { return *j_; }
  const std::string& path() const { return path_; }

  void allow(std::initializer_list<const char*> keys) const {
    if (!j_->is_object()) fail("expected an object");
    for (const auto& [k, v] : j_->items()) {
      if (std::find_if(keys.begin(), keys.end(), [&](const char* a) { return k == a; }) == keys.end()) {
        Node(v, path_ + "/" + k, *doc_).fail("unknown field '" + k + "'");
      }
    }
  }

  std::optional<Node> find(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    auto it = j_->find(key);
    if (it == j_->end()) return std::nullopt;
    return Node(*it, path_ + "/" + key, *doc_);
  }

  Node at(const std::string& key) const {
    auto n = find(key);
    if (!n) fail("missing field '" + key + "'");
    return *n;
  }

  std::size_t size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  Node operator[](std::size_t i) const { return Node((*j_)[i], path_ + "/" + std::to_string(i), *doc_); }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }
  std::int64_t integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<std::int64_t>();
  }
  std::size_t index() const {
    const std::int64_t v = integer();
    if (v < 0) fail("expected a non-negative integer");
    return static_cast<std::size_t>(v);
  }
  bool boolean() const {
    if (!j_->is_boolean()) fail("expected a boolean");
    return j_->get<bool>();
  }
  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  Eigen::VectorXd vec(std::size_t n) const {
    if (size() != n) fail(fmt::format("expected {} numbers", n));
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) v(static_cast<Eigen::Index>(i)) = (*this)[i].number();
    return v;
  }
  Eigen::VectorXd any_vec() const { return vec(size()); }

  Eigen::MatrixXd mat(std::size_t n) const {
    const Eigen::VectorXd v = vec(n * n);
    Eigen::MatrixXd m(n, n);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < n; ++c) m(r, c) = v(static_cast<Eigen::Index>(r * n + c));
    }
    return m;
  }

  Pose pose() const {
    allow({"rotation", "translation"});
    const Node rn = at("rotation");
    const Mat3 m = rn.mat(3);
    try {
      return {Rotation::checked(m, kRotationTolerance), at("translation").vec(3)};
    } catch (const Error& e) {
      rn.fail(e.what(), e.code());
    }
  }

  Twist twist() const { return Twist::from_vector(vec(6)); }

 private:
  int line() const {
    std::string p = path_;
    while (true) {
      auto it = doc_->lines.find(p);
      if (it != doc_->lines.end()) return it->second;
      const auto cut = p.rfind('/');
      if (cut == std::string::npos || p.empty()) return 1;
      p.resize(cut);
    }
  }

  const Json* j_;
  std::string path_;
  const Document* doc_;
};

TimedPose timed_pose(const Node& n) {
  n.allow({"t", "rotation", "translation", "covariance"});
  TimedPose p;
  p.t = n.at("t").number();
  const Node rn = n.at("rotation");
  try {
    p.pose = Pose(Rotation::checked(rn.mat(3), kRotationTolerance), n.at("translation").vec(3));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonOrthonormalRotation) throw;
    rn.fail(e.what(), e.code());
  }
  p.covariance = n.at("covariance").mat(6);
  return p;
}

Trajectory trajectory(const Node& n, int id) {
  std::vector<TimedPose> poses;
  for (std::size_t i = 0; i < n.size(); ++i) poses.push_back(timed_pose(n[i]));
  try {
    return Trajectory(id, std::move(poses));
  } catch (const Error& e) {
    n.fail(e.what());
  }
}

KeypointObservation observation(const Node& n) {
  n.allow({"t", "point", "covariance"});
  KeypointObservation o;
  o.t = n.at("t").number();
  o.point_laser = n.at("point").vec(3);
  o.covariance = n.at("covariance").mat(3);
  return o;
}

NoiseParams noise(const Node& n) {
  n.allow({"wnoa_psd", "relpose_sigma", "submap_prior_sigma_phi", "submap_prior_sigma_rho"});
  NoiseParams p;
  p.wnoa_psd = n.at("wnoa_psd").mat(6);
  p.relpose_sigma = n.at("relpose_sigma").vec(6);
  p.submap_prior_sigma_phi = n.at("submap_prior_sigma_phi").number();
  p.submap_prior_sigma_rho = n.at("submap_prior_sigma_rho").vec(3);
  try {
    p.validate();
  } catch (const Error& e) {
    n.fail(e.what());
  }
  return p;
}

ExtrinsicPrior prior(const Node& n) {
  n.allow({"mean", "sigma_phi", "sigma_rho"});
  try {
    return ExtrinsicPrior(n.at("mean").pose(), n.at("sigma_phi").number(), n.at("sigma_rho").number());
  } catch (const Error& e) {
    if (e.code() != ErrorCode::InvalidArgument) throw;
    n.fail(e.what());
  }
}

Json prior_json(const ExtrinsicPrior& p) {
  return {{"mean", to_json(p.mean)}, {"sigma_phi", p.sigma_phi}, {"sigma_rho", p.sigma_rho}};
}

ScenarioSpec spec_from_node(const Node& n) {
  n.allow({"seed", "n_submaps", "keypoints_per_pair", "motion", "motion_amplitude", "true_extrinsic", "prior_offset",
           "prior_sigma_phi", "prior_sigma_rho", "global_drift", "local_drift", "point_noise_sigma", "outlier_fraction",
           "altitude", "speed", "dvl_period", "half_swath", "lateral_offset", "depth_amplitude", "seafloor_depth",
           "field_radius", "keypoint_spacing", "keypoint_count"});
  ScenarioSpec s;
  auto num = [&](const char* k, double& v) {
    if (auto c = n.find(k)) v = c->number();
  };
  auto integer = [&](const char* k, int& v) {
    if (auto c = n.find(k)) v = static_cast<int>(c->integer());
  };
  if (auto c = n.find("seed")) {
    if (!c->json().is_number_unsigned()) c->fail("expected a non-negative integer");
    s.seed = c->json().get<std::uint64_t>();
  }
  integer("n_submaps", s.n_submaps);
  integer("keypoints_per_pair", s.keypoints_per_pair);
  integer("keypoint_count", s.keypoint_count);
  if (auto c = n.find("motion")) {
    const std::string m = c->string();
    if (m == "planar") {
      s.motion = MotionMode::Planar;
    } else if (m == "excited") {
      s.motion = MotionMode::Excited;
    } else {
      c->fail("expected 'planar' or 'excited'");
    }
  }
  num("motion_amplitude", s.motion_amplitude);
  if (auto c = n.find("true_extrinsic")) s.true_extrinsic = c->pose();
  if (auto c = n.find("prior_offset")) s.prior_offset = c->twist();
  num("prior_sigma_phi", s.prior_sigma_phi);
  num("prior_sigma_rho", s.prior_sigma_rho);
  if (auto c = n.find("global_drift")) s.global_drift = c->twist();
  if (auto c = n.find("local_drift")) s.local_drift = c->twist();
  num("point_noise_sigma", s.point_noise_sigma);
  num("outlier_fraction", s.outlier_fraction);
  num("altitude", s.altitude);
  num("speed", s.speed);
  num("dvl_period", s.dvl_period);
  num("half_swath", s.half_swath);
  num("lateral_offset", s.lateral_offset);
  num("depth_amplitude", s.depth_amplitude);
  num("seafloor_depth", s.seafloor_depth);
  num("field_radius", s.field_radius);
  num("keypoint_spacing", s.keypoint_spacing);
  try {
    s.validate();
  } catch (const Error& e) {
    n.fail(e.what(), e.code());
  }
  return s;
}

GroundTruth truth(const Node& n) {
  n.allow({"extrinsic", "trajectories", "keypoints", "observation_keypoint", "outlier", "global_drift"});
  GroundTruth g;
  g.extrinsic = n.at("extrinsic").pose();
  const Node trajs = n.at("trajectories");
  for (std::size_t i = 0; i < trajs.size(); ++i) g.trajectories.push_back(trajectory(trajs[i], static_cast<int>(i)));
  const Node kps = n.at("keypoints");
  for (std::size_t i = 0; i < kps.size(); ++i) g.keypoints.emplace_back(kps[i].vec(3));
  const Node ok = n.at("observation_keypoint");
  for (std::size_t i = 0; i < ok.size(); ++i) {
    std::vector<int> row;
    for (std::size_t k = 0; k < ok[i].size(); ++k) {
      const std::size_t v = ok[i][k].index();
      if (v >= g.keypoints.size()) ok[i][k].fail("keypoint index out of range");
      row.push_back(static_cast<int>(v));
    }
    g.observation_keypoint.push_back(std::move(row));
  }
  const Node out = n.at("outlier");
  for (std::size_t i = 0; i < out.size(); ++i) g.outlier.push_back(out[i].boolean());
  const Node gd = n.at("global_drift");
  for (std::size_t i = 0; i < gd.size(); ++i) g.global_drift.push_back(gd[i].twist());
  return g;
}

GateStats gate(const Node& n) {
  n.allow({"inliers", "outliers", "inliers_removed", "outliers_removed"});
  GateStats g;
  g.inliers = static_cast<int>(n.at("inliers").index());
  g.outliers = static_cast<int>(n.at("outliers").index());
  g.inliers_removed = static_cast<int>(n.at("inliers_removed").index());
  g.outliers_removed = static_cast<int>(n.at("outliers_removed").index());
  return g;
}

void check_version(const Node& root) {
  const Node v = root.at("schema_version");
  if (v.string() != kSchemaVersion) v.fail(fmt::format("unsupported schema version (expected '{}')", kSchemaVersion));
}

}  // namespace

std::string canonical_dump(const Json& j) {
  std::string out;
  dump(j, 0, out);
  out += "\n";
  return out;
}

std::map<std::string, int> json_line_index(const std::string& text) {
  struct Frame {
    bool object;
    std::string key;
    int index = -1;
    bool expect_key = true;
  };
  std::map<std::string, int> lines;
  std::vector<Frame> stack;
  int line = 1;
  auto path = [&] {
    std::string p;
    for (const Frame& f : stack) p += "/" + (f.object ? f.key : std::to_string(f.index));
    return p;
  };
  auto value_start = [&] {
    if (stack.empty()) {
      lines.emplace("", line);
    } else if (!stack.back().object) {
      ++stack.back().index;
      lines.emplace(path(), line);
    }
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '\n') {
      ++line;
    } else if (c == '"') {
      std::string s;
      for (++i; i < text.size() && text[i] != '"'; ++i) {
        if (text[i] == '\\' && i + 1 < text.size()) ++i;
        s += text[i];
      }
      if (!stack.empty() && stack.back().object && stack.back().expect_key) {
        stack.back().key = s;
        stack.back().expect_key = false;
        lines.emplace(path(), line);
      } else {
        value_start();
      }
    } else if (c == '{' || c == '[') {
      value_start();
      stack.push_back({c == '{', "", -1, true});
    } else if (c == '}' || c == ']') {
      if (!stack.empty()) stack.pop_back();
    } else if (c == ',') {
      if (!stack.empty() && stack.back().object) stack.back().expect_key = true;
    } else if (c == '-' || std::isalnum(static_cast<unsigned char>(c))) {
      value_start();
      while (i + 1 < text.size() && (std::isalnum(static_cast<unsigned char>(text[i + 1])) || text[i + 1] == '.' ||
                                     text[i + 1] == '-' || text[i + 1] == '+')) {
        ++i;
      }
    }
  }
  return lines;
}

Document parse_document(const std::string& text, const std::string& source) {
  Document d;
  d.source = source;
  try {
    d.json = Json::parse(text);
  } catch (const Json::parse_error& e) {
    // byte offset -> line for the diagnostic
    const auto upto = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(upto), '\n');
    throw Error(ErrorCode::SchemaViolation, fmt::format("{}:{}: malformed JSON: {}", source, line, e.what()));
  }
  d.lines = json_line_index(text);
  return d;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

Document load_document(const std::filesystem::path& path) { return parse_document(read_text(path), path.string()); }

Json to_json(const Pose& pose) {
  return {{"rotation", mat_json(pose.rotation().matrix())}, {"translation", vec_json(pose.translation())}};
}

Json to_json(const ScenarioSpec& s) {
  return {{"seed", s.seed},
          {"n_submaps", s.n_submaps},
          {"keypoints_per_pair", s.keypoints_per_pair},
          {"motion", s.motion == MotionMode::Planar ? "planar" : "excited"},
          {"motion_amplitude", s.motion_amplitude},
          {"true_extrinsic", to_json(s.true_extrinsic)},
          {"prior_offset", vec_json(s.prior_offset.vector())},
          {"prior_sigma_phi", s.prior_sigma_phi},
          {"prior_sigma_rho", s.prior_sigma_rho},
          {"global_drift", vec_json(s.global_drift.vector())},
          {"local_drift", vec_json(s.local_drift.vector())},
          {"point_noise_sigma", s.point_noise_sigma},
          {"outlier_fraction", s.outlier_fraction},
          {"altitude", s.altitude},
          {"speed", s.speed},
          {"dvl_period", s.dvl_period},
          {"half_swath", s.half_swath},
          {"lateral_offset", s.lateral_offset},
          {"depth_amplitude", s.depth_amplitude},
          {"seafloor_depth", s.seafloor_depth},
          {"field_radius", s.field_radius},
          {"keypoint_spacing", s.keypoint_spacing},
          {"keypoint_count", s.keypoint_count}};
}

Json to_json(const Scenario& s) {
  Json j;
  Json submaps = Json::array();
  for (const Submap& sm : s.submaps) {
    Json obs = Json::array();
    for (const KeypointObservation& o : sm.observations) {
      obs.push_back({{"t", o.t}, {"point", vec_json(o.point_laser)}, {"covariance", mat_json(o.covariance)}});
    }
    submaps.push_back({{"id", sm.id}, {"trajectory", trajectory_json(sm.trajectory)}, {"observations", obs}});
  }
  j["submaps"] = submaps;
  Json corr = Json::array();
  for (const Correspondence& c : s.correspondences) {
    corr.push_back({{"submap_a", c.submap_a}, {"submap_b", c.submap_b}, {"index_a", c.index_a}, {"index_b", c.index_b}});
  }
  j["correspondences"] = corr;
  j["prior"] = prior_json(s.prior);
  j["noise"] = {{"wnoa_psd", mat_json(s.noise.wnoa_psd)},
                {"relpose_sigma", vec_json(s.noise.relpose_sigma)},
                {"submap_prior_sigma_phi", s.noise.submap_prior_sigma_phi},
                {"submap_prior_sigma_rho", vec_json(s.noise.submap_prior_sigma_rho)}};
  j["gate"] = {{"inliers", s.gate.inliers},
               {"outliers", s.gate.outliers},
               {"inliers_removed", s.gate.inliers_removed},
               {"outliers_removed", s.gate.outliers_removed}};
  if (s.spec) j["spec"] = to_json(*s.spec);
  if (s.truth) {
    const GroundTruth& g = *s.truth;
    Json t;
    t["extrinsic"] = to_json(g.extrinsic);
    t["trajectories"] = Json::array();
    for (const Trajectory& tr : g.trajectories) t["trajectories"].push_back(trajectory_json(tr));
    t["keypoints"] = Json::array();
    for (const Vec3& k : g.keypoints) t["keypoints"].push_back(vec_json(k));
    t["observation_keypoint"] = g.observation_keypoint;
    t["outlier"] = g.outlier;
    t["global_drift"] = Json::array();
    for (const Twist& d : g.global_drift) t["global_drift"].push_back(vec_json(d.vector()));
    j["truth"] = t;
  }
  return j;
}

Json dataset_json(const Scenario& scenario) {
  return {{"schema_version", kSchemaVersion}, {"scenario", to_json(scenario)}};
}

ScenarioSpec spec_from_json(const Document& doc) { return spec_from_node(Node(doc.json, "", doc)); }

Scenario dataset_from_json(const Document& doc) {
  const Node root(doc.json, "", doc);
  root.allow({"schema_version", "scenario"});
  check_version(root);
  const Node n = root.at("scenario");
  n.allow({"submaps", "correspondences", "prior", "noise", "gate", "spec", "truth"});

  Scenario s;
  std::vector<Trajectory> measured;
  std::vector<std::vector<KeypointObservation>> obs;
  const Node sms = n.at("submaps");
  if (sms.size() == 0) sms.fail("at least one submap is required");
  for (std::size_t i = 0; i < sms.size(); ++i) {
    const Node sm = sms[i];
    sm.allow({"id", "trajectory", "observations"});
    if (sm.at("id").index() != i) sm.at("id").fail("submap ids must equal their position");
    measured.push_back(trajectory(sm.at("trajectory"), static_cast<int>(i)));
    std::vector<KeypointObservation> o;
    const Node on = sm.at("observations");
    for (std::size_t k = 0; k < on.size(); ++k) {
      o.push_back(observation(on[k]));
      if (!measured.back().contains(o.back().t)) on[k].at("t").fail("observation time outside the trajectory span");
    }
    obs.push_back(std::move(o));
  }
  const Node cn = n.at("correspondences");
  for (std::size_t i = 0; i < cn.size(); ++i) {
    const Node c = cn[i];
    c.allow({"submap_a", "submap_b", "index_a", "index_b"});
    Correspondence corr;
    corr.submap_a = static_cast<int>(c.at("submap_a").index());
    corr.submap_b = static_cast<int>(c.at("submap_b").index());
    corr.index_a = c.at("index_a").index();
    corr.index_b = c.at("index_b").index();
    const auto n_sub = measured.size();
    if (static_cast<std::size_t>(corr.submap_a) >= n_sub || static_cast<std::size_t>(corr.submap_b) >= n_sub ||
        corr.submap_a == corr.submap_b) {
      c.fail("invalid submap pair");
    }
    if (corr.index_a >= obs[static_cast<std::size_t>(corr.submap_a)].size()) c.at("index_a").fail("index out of range");
    if (corr.index_b >= obs[static_cast<std::size_t>(corr.submap_b)].size()) c.at("index_b").fail("index out of range");
    s.correspondences.push_back(corr);
  }
  s.prior = prior(n.at("prior"));
  s.noise = noise(n.at("noise"));
  s.gate = gate(n.at("gate"));
  if (auto sp = n.find("spec")) s.spec = spec_from_node(*sp);
  if (auto t = n.find("truth")) {
    s.truth = truth(*t);
    if (s.truth->outlier.size() != s.correspondences.size()) t->at("outlier").fail("one label per correspondence");
  }
  s.rebuild(measured, obs);
  return s;
}

void write_dataset(const Scenario& scenario, const std::filesystem::path& path) {
  write_text(path, canonical_dump(dataset_json(scenario)));
}

Scenario read_dataset(const std::filesystem::path& path) { return dataset_from_json(load_document(path)); }

Json result_json(const CalibrationResult& r, const ExtrinsicPrior& p, const Json& config) {
  Json j;
  j["schema_version"] = kSchemaVersion;
  j["algorithm"] = r.algorithm;
  j["config"] = config;
  j["extrinsic"] = to_json(r.extrinsic);
  j["prior"] = prior_json(p);
  j["delta_phi"] = vec_json(r.delta_phi);
  j["delta_r"] = vec_json(r.delta_r);
  const SolveReport& s = r.solve_report;
  j["solver"] = {{"iterations", s.iterations},
                 {"initial_cost", s.initial_cost},
                 {"final_cost", s.final_cost},
                 {"converged", s.converged},
                 {"termination", s.termination},
                 {"cost_history", s.cost_history},
                 {"singular_values", s.singular_values}};
  j["observability"] = Json::array();
  for (const ObservabilityWarning& w : r.observability) {
    j["observability"].push_back({{"state", {{"kind", kind_name(w.state.kind)}, {"index", w.state.index}}},
                                  {"ratio", w.ratio},
                                  {"rotation", vec_json(w.rotation)},
                                  {"translation", vec_json(w.translation)},
                                  {"message", w.message}});
  }
  j["warnings"] = r.warnings;
  if (r.posterior_submaps) {
    Json subs = Json::array();
    for (const Submap& sm : *r.posterior_submaps) {
      Json offsets = Json::array();
      for (const Pose& o : sm.offsets) offsets.push_back(to_json(o));
      subs.push_back({{"id", sm.id}, {"central", to_json(sm.central)}, {"offsets", offsets}});
    }
    j["posterior_submaps"] = subs;
  }
  return j;
}

StoredResult result_from_json(const Document& doc) {
  const Node root(doc.json, "", doc);
  root.allow({"schema_version", "algorithm", "config", "extrinsic", "prior", "delta_phi", "delta_r", "solver",
              "observability", "warnings", "posterior_submaps"});
  check_version(root);
  StoredResult out;
  CalibrationResult& r = out.result;
  r.algorithm = static_cast<int>(root.at("algorithm").integer());
  if (r.algorithm < 1 || r.algorithm > 3) root.at("algorithm").fail("expected 1, 2 or 3");
  out.config = root.at("config").json();
  r.extrinsic = root.at("extrinsic").pose();
  out.prior = prior(root.at("prior"));
  r.delta_phi = root.at("delta_phi").vec(3);
  r.delta_r = root.at("delta_r").vec(3);
  const Node s = root.at("solver");
  s.allow({"iterations", "initial_cost", "final_cost", "converged", "termination", "cost_history", "singular_values"});
  r.solve_report.iterations = static_cast<int>(s.at("iterations").index());
  r.solve_report.initial_cost = s.at("initial_cost").number();
  r.solve_report.final_cost = s.at("final_cost").number();
  r.solve_report.converged = s.at("converged").boolean();
  r.solve_report.termination = s.at("termination").string();
  for (double v : s.at("cost_history").any_vec()) r.solve_report.cost_history.push_back(v);
  for (double v : s.at("singular_values").any_vec()) r.solve_report.singular_values.push_back(v);
  const Node obs = root.at("observability");
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const Node o = obs[i];
    o.allow({"state", "ratio", "rotation", "translation", "message"});
    ObservabilityWarning w;
    const Node st = o.at("state");
    st.allow({"kind", "index"});
    const std::string kind = st.at("kind").string();
    bool known = false;
    for (StateKind k : {StateKind::Extrinsic, StateKind::SubmapPose, StateKind::VehiclePose, StateKind::Velocity}) {
      if (kind == kind_name(k)) {
        w.state.kind = k;
        known = true;
      }
    }
    if (!known) st.at("kind").fail("unknown state kind");
    w.state.index = static_cast<int>(st.at("index").index());
    w.ratio = o.at("ratio").number();
    w.rotation = o.at("rotation").vec(3);
    w.translation = o.at("translation").vec(3);
    w.message = o.at("message").string();
    r.observability.push_back(std::move(w));
  }
  const Node warn = root.at("warnings");
  for (std::size_t i = 0; i < warn.size(); ++i) r.warnings.push_back(warn[i].string());
  if (auto ps = root.find("posterior_submaps")) {
    std::vector<Submap> subs;
    for (std::size_t i = 0; i < ps->size(); ++i) {
      const Node n = (*ps)[i];
      n.allow({"id", "central", "offsets"});
      Submap sm;
      sm.id = static_cast<int>(n.at("id").index());
      if (sm.id != static_cast<int>(i)) n.at("id").fail("submap ids must equal their position");
      sm.central = n.at("central").pose();
      const Node off = n.at("offsets");
      for (std::size_t k = 0; k < off.size(); ++k) sm.offsets.push_back(off[k].pose());
      subs.push_back(std::move(sm));
    }
    r.posterior_submaps = std::move(subs);
  }
  return out;
}

Json disparity_stats_json(const DisparityReport& report) {
  const Histogram& h = report.histogram;
  return {{"points", report.per_point.size()},
          {"median", report.median},
          {"mean", report.mean},
          {"histogram", {{"edges", h.edges}, {"counts", h.counts}, {"density", h.density}, {"clipped", h.clipped}}}};
}

}  // namespace lvcal
