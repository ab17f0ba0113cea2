#include "dfl/pipeline/run_config.hpp"

#include <fstream>
#include <stdexcept>

#include "dfl/common/hash.hpp"
#include "dfl/corpus/synth.hpp"

namespace dfl::pipeline {

std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

Precision precision_from_string(const std::string& name) {
  if (name == "float32") return Precision::float32;
  if (name == "float64") return Precision::float64;
  throw std::invalid_argument("unknown precision: " + name);
}

void RunConfig::apply_seed(std::uint64_t value) {
  seed = value;
  corpus.seed = value;
  aux_train.schedule.seed = value;
  enhancer_train.schedule.seed = value;
  eval.trials.seed = value;
}

std::uint64_t RunConfig::aux_init_seed() const { return corpus::mix_seed(seed, 101); }
std::uint64_t RunConfig::enhancer_init_seed() const { return corpus::mix_seed(seed, 202); }

nlohmann::json RunConfig::enhancer_config(nets::EnhancerKind kind) const {
  return kind == nets::EnhancerKind::can ? nlohmann::json(can) : nlohmann::json(edn);
}

std::filesystem::path RunConfig::enhancer_checkpoint(nets::EnhancerKind kind, train::LossKind loss) const {
  auto name = nets::to_string(kind) + "-" + train::to_string(loss);
  for (auto& ch : name)
    if (ch == '+') ch = '_';
  return out_dir / "enhancers" / (name + ".ckpt");
}

namespace {

nlohmann::json features_json(const audio::FeatureConfig& f) {
  return {{"window_ms", f.stft.window_ms}, {"hop_ms", f.stft.hop_ms}, {"n_fft", f.stft.n_fft},
          {"bands", f.mel.bands},         {"f_min", f.mel.f_min},     {"f_max", f.mel.f_max},
          {"log_floor", f.floor}};
}

audio::FeatureConfig features_from(const nlohmann::json& j) {
  audio::FeatureConfig f;
  f.stft.window_ms = j.value("window_ms", f.stft.window_ms);
  f.stft.hop_ms = j.value("hop_ms", f.stft.hop_ms);
  f.stft.n_fft = j.value("n_fft", f.stft.n_fft);
  f.mel.bands = j.value("bands", f.mel.bands);
  f.mel.f_min = j.value("f_min", f.mel.f_min);
  f.mel.f_max = j.value("f_max", f.mel.f_max);
  f.floor = j.value("log_floor", f.floor);
  return f;
}

}  // namespace

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"out_dir", c.out_dir.string()},
       {"precision", to_string(c.precision)},
       {"features", features_json(c.features)},
       {"corpus", c.corpus},
       {"aux", {{"net", c.aux_net}, {"train", c.aux_train}}},
       {"enhancer", {{"net", nets::to_string(c.enhancer)}, {"can", c.can}, {"edn", c.edn}, {"train", c.enhancer_train}}},
       {"eval",
        {{"enroll_fraction", c.eval.trials.enroll_fraction},
         {"nontarget_ratio", c.eval.trials.nontarget_ratio},
         {"p_target", c.eval.dcf.p_target},
         {"c_miss", c.eval.dcf.c_miss},
         {"c_fa", c.eval.dcf.c_fa}}}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig{};
  c.out_dir = j.value("out_dir", c.out_dir.string());
  if (j.contains("precision")) c.precision = precision_from_string(j.at("precision").get<std::string>());
  if (j.contains("features")) c.features = features_from(j.at("features"));
  if (j.contains("corpus")) c.corpus = j.at("corpus").get<corpus::CorpusConfig>();
  if (j.contains("aux")) {
    const auto& a = j.at("aux");
    if (a.contains("net")) c.aux_net = a.at("net").get<nets::SpeakerNetConfig>();
    if (a.contains("train")) c.aux_train = a.at("train").get<train::AuxTrainConfig>();
  }
  if (j.contains("enhancer")) {
    const auto& e = j.at("enhancer");
    if (e.contains("net")) c.enhancer = nets::enhancer_kind_from_string(e.at("net").get<std::string>());
    if (e.contains("can")) c.can = e.at("can").get<nets::CanConfig>();
    if (e.contains("edn")) c.edn = e.at("edn").get<nets::EdnConfig>();
    if (e.contains("train")) c.enhancer_train = e.at("train").get<train::EnhancerTrainConfig>();
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.trials.enroll_fraction = e.value("enroll_fraction", c.eval.trials.enroll_fraction);
    c.eval.trials.nontarget_ratio = e.value("nontarget_ratio", c.eval.trials.nontarget_ratio);
    c.eval.dcf.p_target = e.value("p_target", c.eval.dcf.p_target);
    c.eval.dcf.c_miss = e.value("c_miss", c.eval.dcf.c_miss);
    c.eval.dcf.c_fa = e.value("c_fa", c.eval.dcf.c_fa);
  }
  c.apply_seed(j.value("seed", c.seed));
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  return nlohmann::json::parse(in, nullptr, true, true).get<RunConfig>();
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  const auto text = nlohmann::json(config).dump(2) + "\n";
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_if_changed(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace dfl::pipeline
