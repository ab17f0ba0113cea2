#include "dfl/pipeline/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <limits>
#include <set>

#include "dfl/autodiff/checkpoint.hpp"
#include "dfl/common/hash.hpp"
#include "dfl/eval/trials.hpp"
#include "dfl/nets/serialize.hpp"
#include "dfl/pipeline/feature_file.hpp"
#include "dfl/train/batching.hpp"

namespace dfl::pipeline {

namespace fs = std::filesystem;
using ad::Var;

namespace {

template <typename Fn>
decltype(auto) with_precision(Precision p, Fn&& fn) {
  if (p == Precision::float32) return fn.template operator()<float>();
  return fn.template operator()<double>();
}

std::ofstream open_log(const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

std::vector<const corpus::ManifestRow*> concat(std::vector<const corpus::ManifestRow*> a,
                                               const std::vector<const corpus::ManifestRow*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Rows plus the clean rows they reference.
std::vector<const corpus::ManifestRow*> with_clean(const corpus::Manifest& m,
                                                   const std::vector<const corpus::ManifestRow*>& rows) {
  auto out = rows;
  for (const auto* r : rows)
    if (r->noisy()) out.push_back(&m.at(r->clean_utt_id));
  return out;
}

std::vector<train::ParallelFeatures> parallel_pairs(const std::vector<const corpus::ManifestRow*>& rows,
                                                    const std::map<std::string, audio::FeatureMatrix>& feats) {
  std::vector<train::ParallelFeatures> out;
  out.reserve(rows.size());
  for (const auto* r : rows) out.push_back({feats.at(r->utt_id), feats.at(r->clean_utt_id)});
  return out;
}

template <typename Real>
std::vector<double> embed(const nets::SpeakerNet<Real>& net, const ad::Tensor<Real>& x) {
  const auto emb = net.forward(Var<Real>::constant(x), false).embedding.value();
  return {emb.values().begin(), emb.values().end()};
}

}  // namespace

std::map<std::string, audio::FeatureMatrix> load_features(const fs::path& root,
                                                          const std::vector<const corpus::ManifestRow*>& rows,
                                                          const audio::FeatureConfig& config) {
  std::map<std::string, audio::FeatureMatrix> out;
  for (const auto* r : rows) {
    if (out.count(r->utt_id)) continue;
    out.emplace(r->utt_id, audio::extract_log_mel(audio::read_wav(root / r->path), config));
  }
  return out;
}

corpus::CorpusSummary gen_corpus(const RunConfig& config) {
  save_run_config(config.out_dir / "run_config.json", config);
  return corpus::build_parallel_corpus(config.corpus, config.corpus_dir());
}

AuxResult train_aux(const RunConfig& config, std::ostream* log_sink) {
  const auto manifest = corpus::read_manifest(config.manifest_path());
  const auto train_rows = manifest.select("train", false);
  const auto valid_rows = manifest.select("valid", false);
  std::set<std::string> speaker_set;
  for (const auto* r : train_rows) speaker_set.insert(r->speaker_id);
  const std::vector<std::string> speakers(speaker_set.begin(), speaker_set.end());
  const auto label = [&](const std::string& id) {
    const auto it = std::lower_bound(speakers.begin(), speakers.end(), id);
    if (it == speakers.end() || *it != id) throw std::runtime_error("validation speaker " + id + " has no training data");
    return static_cast<int>(it - speakers.begin());
  };

  const auto feats = load_features(config.corpus_dir(), concat(train_rows, valid_rows), config.features);
  std::vector<train::LabeledFeatures> train_set, valid_set;
  for (const auto* r : train_rows) train_set.push_back({feats.at(r->utt_id), label(r->speaker_id)});
  for (const auto* r : valid_rows) valid_set.push_back({feats.at(r->utt_id), label(r->speaker_id)});

  auto net_config = config.aux_net;
  net_config.speakers = static_cast<int>(speakers.size());
  net_config.bands = config.features.mel.bands;

  AuxResult result;
  result.checkpoint = config.aux_checkpoint();
  auto log_file = open_log(result.checkpoint.parent_path() / "log.jsonl");
  train::TrainLog log(&log_file, log_sink);
  with_precision(config.precision, [&]<typename Real>() {
    nets::SpeakerNet<Real> net(net_config, config.aux_init_seed());
    result.history = train::train_speaker_net(net, train_set, valid_set, config.aux_train, log);
    ad::Checkpoint ckpt;
    nets::put_speaker_net(ckpt, net);
    ckpt.header["speaker_ids"] = speakers;
    ckpt.header["precision"] = to_string(config.precision);
    ckpt.save(result.checkpoint);
  });
  save_run_config(config.out_dir / "run_config.json", config);
  return result;
}

EnhancerResult train_enhancer(const RunConfig& config, nets::EnhancerKind kind, train::LossKind loss,
                              const std::optional<fs::path>& aux_checkpoint, std::ostream* log_sink) {
  if (train::needs_aux(loss) && !aux_checkpoint)
    throw UsageError("--loss " + train::to_string(loss) + " needs --aux-checkpoint");

  const auto manifest = corpus::read_manifest(config.manifest_path());
  const auto train_rows = manifest.select("train", true);
  const auto valid_rows = manifest.select("valid", true);
  const auto feats = load_features(config.corpus_dir(), with_clean(manifest, concat(train_rows, valid_rows)),
                                   config.features);
  const auto train_set = parallel_pairs(train_rows, feats);
  const auto valid_set = parallel_pairs(valid_rows, feats);

  EnhancerResult result;
  result.checkpoint = config.enhancer_checkpoint(kind, loss);
  fs::create_directories(result.checkpoint.parent_path());
  auto log_path = result.checkpoint;
  auto log_file = open_log(log_path.replace_extension(".jsonl"));
  train::TrainLog log(&log_file, log_sink);
  auto state_path = result.checkpoint;
  state_path += ".state";

  with_precision(config.precision, [&]<typename Real>() {
    std::unique_ptr<nets::SpeakerNet<Real>> aux;
    if (aux_checkpoint) {
      result.aux_sha256_before = sha256_file(*aux_checkpoint);
      aux = nets::get_speaker_net<Real>(ad::Checkpoint::load(*aux_checkpoint));
      if (aux->config().bands != config.features.mel.bands)
        throw std::runtime_error("auxiliary network expects " + std::to_string(aux->config().bands) + " bands");
    }
    auto net_config = config.enhancer_config(kind);
    net_config["bands"] = config.features.mel.bands;
    auto net = nets::make_enhancer<Real>(kind, net_config, config.enhancer_init_seed());
    auto train_config = config.enhancer_train;
    train_config.loss = loss;
    result.history = train::train_enhancer(*net, aux.get(), train_set, valid_set, train_config, log, state_path);
    for (const auto& r : log.records())
      if (r.at("epoch") == 0) {
        const auto& dfl = r.at("val_deep_feature_loss");
        result.initial_validation = train::EnhancerValidation{
            r.at("val_feature_loss").get<double>(),
            dfl.is_null() ? std::numeric_limits<double>::quiet_NaN() : dfl.get<double>()};
      }

    ad::Checkpoint ckpt;
    nets::put_enhancer(ckpt, *net);
    ckpt.header["loss"] = train::to_string(loss);
    ckpt.header["aux_sha256"] = result.aux_sha256_before;
    ckpt.header["precision"] = to_string(config.precision);
    ckpt.save(result.checkpoint);
  });

  if (aux_checkpoint) {
    result.aux_sha256_after = sha256_file(*aux_checkpoint);
    if (result.aux_sha256_after != result.aux_sha256_before)
      throw std::runtime_error("auxiliary checkpoint changed during enhancer training");
  }
  save_run_config(config.out_dir / "run_config.json", config);
  return result;
}

std::vector<fs::path> enhance(const RunConfig& config, const fs::path& checkpoint, const fs::path& input,
                              const fs::path& out_dir) {
  const auto ckpt = ad::Checkpoint::load(checkpoint);
  const auto provenance = sha256_file(checkpoint);

  std::vector<std::pair<fs::path, fs::path>> jobs;  // wav -> feature file
  if (input.extension() == ".wav") {
    jobs.emplace_back(input, out_dir / (input.stem().string() + ".feat"));
  } else {
    const auto manifest = corpus::read_manifest(input);
    for (const auto& r : manifest.rows) jobs.emplace_back(input.parent_path() / r.path, out_dir / (r.utt_id + ".feat"));
  }

  std::vector<fs::path> written;
  with_precision(config.precision, [&]<typename Real>() {
    const auto net = nets::get_enhancer<Real>(ckpt);
    if (net->config_json().at("bands").template get<int>() != config.features.mel.bands)
      throw std::runtime_error("checkpoint expects " + net->config_json().at("bands").dump() + " bands, features have " +
                               std::to_string(config.features.mel.bands));
    ad::NoGradGuard no_grad;
    for (const auto& [wav, out] : jobs) {
      const auto features = audio::extract_log_mel(audio::read_wav(wav), config.features);
      const auto enhanced = net->enhance(Var<Real>::constant(train::to_tensor<Real>(features)), false);
      write_features(out, {train::to_matrix(enhanced.value(), audio::FeatureDomain::log_mel), provenance});
      written.push_back(out);
    }
  });
  return written;
}

eval::EvalReport evaluate(const RunConfig& config, const fs::path& aux_checkpoint,
                          const std::optional<fs::path>& enhancer_checkpoint, const fs::path& manifest_path) {
  const auto manifest = corpus::read_manifest(manifest_path);
  const auto root = manifest_path.parent_path();

  std::vector<eval::LabeledUtterance> utterances;
  for (const auto* r : manifest.select("test", false)) utterances.push_back({r->utt_id, r->speaker_id});
  std::vector<std::string> warnings;
  const auto trials = eval::make_trials(utterances, config.eval.trials, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
  std::set<std::string> needed;
  for (const auto& t : trials.rows) needed.insert(t.enroll), needed.insert(t.test);

  // (kind, snr) -> clean id -> noisy row
  std::map<std::pair<std::string, double>, std::map<std::string, const corpus::ManifestRow*>> by_condition;
  for (const auto* r : manifest.select("test", true))
    by_condition[{corpus::to_string(*r->noise_kind), r->snr_db}][r->clean_utt_id] = r;

  eval::EvalReport report;
  if (enhancer_checkpoint) report.enhancer_label = enhancer_checkpoint->stem().string();

  with_precision(config.precision, [&]<typename Real>() {
    const auto aux = nets::get_speaker_net<Real>(ad::Checkpoint::load(aux_checkpoint));
    std::unique_ptr<nets::Enhancer<Real>> enhancer;
    if (enhancer_checkpoint) enhancer = nets::get_enhancer<Real>(ad::Checkpoint::load(*enhancer_checkpoint));
    ad::NoGradGuard no_grad;

    eval::ScoreSet pooled_base, pooled_enh;
    bool any = false;
    const auto score = [&](const std::map<std::string, std::vector<double>>& emb, eval::ScoreSet& set,
                           eval::ScoreSet& pooled) {
      for (const auto& t : trials.rows) {
        const double s = eval::score_cosine(emb.at(t.enroll), emb.at(t.test));
        set.add(s, t.target);
        pooled.add(s, t.target);
      }
    };

    for (auto kind : config.corpus.noise_kinds)
      for (double snr : config.corpus.test_snrs_db) {
        eval::ReportRow row{corpus::to_string(kind), snr, std::nullopt, std::nullopt};
        const auto it = by_condition.find({row.noise_kind, snr});
        const bool complete =
            it != by_condition.end() &&
            std::all_of(needed.begin(), needed.end(), [&](const std::string& id) { return it->second.count(id) > 0; });
        if (!complete) {
          std::cerr << "warning: condition " << row.noise_kind << " " << snr << " dB has missing utterances\n";
          report.rows.push_back(row);
          continue;
        }
        std::map<std::string, std::vector<double>> base, enh;
        for (const auto& id : needed) {
          const auto* noisy = it->second.at(id);
          const auto x = train::to_tensor<Real>(audio::extract_log_mel(audio::read_wav(root / noisy->path), config.features));
          base[id] = embed(*aux, x);
          if (enhancer) enh[id] = embed(*aux, enhancer->enhance(Var<Real>::constant(x), false).value());
        }
        eval::ScoreSet base_set, enh_set;
        score(base, base_set, pooled_base);
        row.baseline = eval::compute_metrics(base_set, config.eval.dcf);
        if (enhancer) {
          score(enh, enh_set, pooled_enh);
          row.enhanced = eval::compute_metrics(enh_set, config.eval.dcf);
        }
        any = true;
        report.rows.push_back(row);
      }

    eval::ReportRow pooled{"pooled", std::nullopt, std::nullopt, std::nullopt};
    if (any) {
      pooled.baseline = eval::compute_metrics(pooled_base, config.eval.dcf);
      if (enhancer) pooled.enhanced = eval::compute_metrics(pooled_enh, config.eval.dcf);
    }
    report.rows.push_back(pooled);
  });
  return report;
}

void write_report(const eval::EvalReport& report, const fs::path& dir, const std::string& stem) {
  fs::create_directories(dir);
  const auto write = [](const fs::path& path, const std::string& text) {
    write_file_if_changed(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  };
  write(dir / (stem + ".txt"), report.table());
  write(dir / (stem + ".jsonl"), report.json_lines());
}

}  // namespace dfl::pipeline
