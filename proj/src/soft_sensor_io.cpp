#include "hekf/soft_sensor_io.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hekf/errors.hpp"

namespace hekf {

using nlohmann::json;

namespace {

constexpr const char* kFormatName = "hekf-soft-sensor";

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j, const char* what) {
  if (!j.is_array()) throw ConfigError(std::string("soft sensor file: ") + what + " must be an array");
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json standardizer_json(const Standardizer& s) {
  return {{"mean", vector_json(s.mean())}, {"scale", vector_json(s.scale())}};
}

Standardizer standardizer_from(const json& j) {
  return Standardizer(vector_from(j.at("mean"), "mean"), vector_from(j.at("scale"), "scale"));
}

json network_json(const NarxNetwork& n) {
  const NarxConfig& c = n.config();
  return {{"hidden_layers", c.hidden_layers},     {"total_neurons", c.total_neurons},
          {"input_delays", c.input_delays},       {"feedback_delays", c.feedback_delays},
          {"num_inputs", c.num_inputs},           {"shape", n.shape()},
          {"params", vector_json(n.params())}};
}

NarxNetwork network_from(const json& j) {
  NarxConfig c;
  c.hidden_layers = j.at("hidden_layers").get<int>();
  c.total_neurons = j.at("total_neurons").get<int>();
  c.input_delays = j.at("input_delays").get<int>();
  c.feedback_delays = j.at("feedback_delays").get<int>();
  c.num_inputs = j.at("num_inputs").get<int>();
  NarxNetwork n(c);
  if (j.at("shape").get<std::vector<int>>() != n.shape()) {
    throw ConfigError("soft sensor file: layer shape does not match the declared configuration");
  }
  n.set_params(vector_from(j.at("params"), "params"));
  return n;
}

}  // namespace

std::string soft_sensor_to_json(const SoftSensorArtifacts& a) {
  json j;
  j["format"] = kFormatName;
  j["version"] = kSoftSensorFormatVersion;
  j["input_standardizer"] = standardizer_json(*a.bank.input_standardizer());
  j["target_standardizer"] = standardizer_json(a.bank.target_standardizer());
  json nets = json::array();
  for (std::size_t c = 0; c < a.bank.networks().size(); ++c) {
    json n = network_json(a.bank.networks()[c]);
    n["lambda"] = a.summary[c].lambda;
    n["validation_nmse"] = a.summary[c].validation_nmse;
    nets.push_back(std::move(n));
  }
  j["networks"] = std::move(nets);
  const PointCloud3& pts = a.confidence.training_points();
  j["confidence"] = {{"K", a.confidence.k()},
                     {"d_max", a.confidence.d_max()},
                     {"training_inputs", std::vector<double>(pts.data(), pts.data() + pts.size())}};
  return j.dump(1);
}

SoftSensorArtifacts soft_sensor_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormatName) {
      throw ConfigError("soft sensor file: unexpected format tag");
    }
    if (j.at("version").get<int>() != kSoftSensorFormatVersion) {
      throw ConfigError("soft sensor file: unsupported version " + j.at("version").dump());
    }
    auto input_std = std::make_shared<const Standardizer>(standardizer_from(j.at("input_standardizer")));
    Standardizer target_std = standardizer_from(j.at("target_standardizer"));
    const json& nets = j.at("networks");
    if (!nets.is_array() || nets.size() != SoftSensorBank::kChannels) {
      throw ConfigError("soft sensor file: expected 5 networks");
    }
    SoftSensorArtifacts a;
    std::array<NarxNetwork, SoftSensorBank::kChannels> networks;
    for (std::size_t c = 0; c < nets.size(); ++c) {
      networks[c] = network_from(nets[c]);
      a.summary[c].lambda = nets[c].value("lambda", 0.0);
      a.summary[c].validation_nmse = nets[c].value("validation_nmse", 0.0);
    }
    a.bank = SoftSensorBank(input_std, std::move(target_std), std::move(networks));
    const json& conf = j.at("confidence");
    const auto flat = conf.at("training_inputs").get<std::vector<double>>();
    if (flat.size() % 3 != 0) throw ConfigError("soft sensor file: training inputs are not triples");
    PointCloud3 pts = Eigen::Map<const PointCloud3>(flat.data(), static_cast<Eigen::Index>(flat.size() / 3), 3);
    a.confidence = ConfidenceModel::from_standardized(std::move(pts), input_std, conf.at("K").get<int>(),
                                                      conf.at("d_max").get<double>());
    return a;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("soft sensor file: ") + e.what());
  }
}

void save_soft_sensor(const SoftSensorArtifacts& artifacts, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << soft_sensor_to_json(artifacts) << '\n';
  if (!out) throw ConfigError("failed writing " + path.string());
}

SoftSensorArtifacts load_soft_sensor(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return soft_sensor_from_json(ss.str());
}

}  // namespace hekf
