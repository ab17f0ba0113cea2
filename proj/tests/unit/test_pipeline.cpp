#include <doctest.h>
#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dfl/autodiff/checkpoint.hpp"
#include "dfl/common/binary_io.hpp"
#include "dfl/common/hash.hpp"
#include "dfl/nets/serialize.hpp"
#include "dfl/pipeline/feature_file.hpp"
#include "dfl/pipeline/pipeline.hpp"
#include "dfl/pipeline/run_config.hpp"

namespace fs = std::filesystem;
using namespace dfl::pipeline;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("dfl_" + tag + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

RunConfig tiny_run(const fs::path& out) {
  RunConfig c;
  c.out_dir = out;
  c.precision = Precision::float64;
  c.corpus.speakers = 3;
  c.corpus.utterances_per_speaker = 4;
  c.corpus.utterance_seconds = 1.5;
  c.corpus.train_fraction = 0.75;
  c.corpus.valid_fraction = 0.25;
  c.corpus.test_utterances_per_speaker = 2;
  c.corpus.test_utterance_seconds = 1.0;
  c.aux_net.stem_channels = 4;
  c.aux_net.stage_channels = {4, 4, 8, 8};
  c.aux_net.lde_components = 4;
  c.aux_net.embed_dim = 16;
  c.aux_train.schedule.epochs = 2;
  c.aux_train.schedule.batch_size = 4;
  c.aux_train.schedule.segment_frames = 40;
  c.can.layers = 3;
  c.can.channels = 6;
  c.can.dilations = {1, 2, 3};
  c.can.tse_positions = {2};
  c.can.tse_reduction = 2;
  c.enhancer_train.schedule.epochs = 1;
  c.enhancer_train.schedule.batch_size = 4;
  c.enhancer_train.schedule.segment_frames = 40;
  c.apply_seed(5);
  return c;
}

}  // namespace

TEST_CASE("feature file round trip and malformed input") {
  FeatureFile f;
  f.features.bands = 3;
  f.features.frames = 4;
  for (int i = 0; i < 12; ++i) f.features.values.push_back(0.25 * i - 1.0);
  f.provenance = std::string(64, 'a');
  const auto bytes = encode_features(f);
  const auto back = decode_features(bytes);
  CHECK(back.features.bands == 3);
  CHECK(back.features.frames == 4);
  CHECK(back.features.values == f.features.values);
  CHECK(back.provenance == f.provenance);

  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_features(bad), dfl::FormatError);
  bad = bytes;
  bad[8] = 9;  // version
  CHECK_THROWS_AS(decode_features(bad), dfl::FormatError);
  bad = bytes;
  bad.pop_back();
  CHECK_THROWS_AS(decode_features(bad), dfl::FormatError);
}

TEST_CASE("run config JSON round trip and seed propagation") {
  auto c = tiny_run("somewhere");
  c.apply_seed(42);
  CHECK(c.corpus.seed == 42);
  CHECK(c.aux_train.schedule.seed == 42);
  CHECK(c.enhancer_train.schedule.seed == 42);
  CHECK(c.eval.trials.seed == 42);
  CHECK(c.aux_init_seed() != c.enhancer_init_seed());

  const nlohmann::json j = c;
  const auto back = j.get<RunConfig>();
  CHECK(nlohmann::json(back) == j);
  CHECK(back.can.channels == 6);
  CHECK(back.precision == Precision::float64);
  CHECK(c.enhancer_checkpoint(dfl::nets::EnhancerKind::can, dfl::train::LossKind::dfl_fl).filename() ==
        "can-dfl_fl.ckpt");

  TempDir dir("runcfg");
  fs::create_directories(dir.path);
  {
    std::ofstream out(dir.path / "c.json");
    out << "{ // partial\n \"seed\": 7, \"enhancer\": {\"can\": {\"channels\": 12}} }";
  }
  const auto loaded = load_run_config(dir.path / "c.json");
  CHECK(loaded.seed == 7);
  CHECK(loaded.corpus.seed == 7);
  CHECK(loaded.can.channels == 12);
  CHECK(loaded.can.layers == dfl::nets::CanConfig{}.layers);
}

TEST_CASE("shipped configs load") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(fs::path(DFL_SOURCE_DIR) / "configs")) {
    CAPTURE(entry.path().string());
    CHECK_NOTHROW(load_run_config(entry.path()));
    ++count;
  }
  CHECK(count >= 3);
  CHECK(load_run_config(fs::path(DFL_SOURCE_DIR) / "configs" / "full_scale_edn.json").enhancer ==
        dfl::nets::EnhancerKind::edn);
}

TEST_CASE("pipeline end to end on a tiny corpus") {
  TempDir dir("pipeline");
  const auto cfg = tiny_run(dir.path);
  const auto summary = gen_corpus(cfg);
  CHECK(summary.test_conditions == 15);

  const auto aux = train_aux(cfg, nullptr);
  REQUIRE(fs::exists(aux.checkpoint));
  CHECK(aux.history.size() == 2);
  CHECK(fs::exists(aux.checkpoint.parent_path() / "log.jsonl"));

  using dfl::nets::EnhancerKind;
  using dfl::train::LossKind;
  CHECK_THROWS_AS(train_enhancer(cfg, EnhancerKind::can, LossKind::dfl, std::nullopt, nullptr), UsageError);

  SUBCASE("identity enhancer leaves every cell unchanged") {
    // Zero output logits make a freshly initialized CAN an exact identity.
    auto net = dfl::nets::make_enhancer<double>(EnhancerKind::can, cfg.enhancer_config(EnhancerKind::can), 3);
    dfl::ad::Checkpoint ckpt;
    dfl::nets::put_enhancer(ckpt, *net);
    const auto path = dir.path / "identity.ckpt";
    ckpt.save(path);

    const auto report = evaluate(cfg, aux.checkpoint, path, cfg.manifest_path());
    CHECK(report.complete());
    CHECK(report.rows.size() == 16);
    CHECK(report.enhancer_label == "identity");
    for (const auto& row : report.rows) {
      REQUIRE(row.baseline);
      REQUIRE(row.enhanced);
      CHECK(row.enhanced->eer_percent == doctest::Approx(row.baseline->eer_percent).epsilon(1e-12));
      CHECK(row.enhanced->min_dcf == doctest::Approx(row.baseline->min_dcf).epsilon(1e-12));
    }
    write_report(report, cfg.report_dir(), "identity");
    CHECK(fs::exists(cfg.report_dir() / "identity.txt"));
  }

  SUBCASE("trained enhancer, enhance and a missing condition") {
    const auto aux_sha = dfl::sha256_file(aux.checkpoint);
    const auto enh = train_enhancer(cfg, EnhancerKind::can, LossKind::dfl, aux.checkpoint, nullptr);
    CHECK(enh.aux_sha256_before == aux_sha);
    CHECK(enh.aux_sha256_after == aux_sha);
    CHECK(enh.history.size() == 1);
    REQUIRE(enh.initial_validation);
    CHECK(std::isfinite(enh.initial_validation->deep_feature_loss));
    CHECK(enh.initial_validation->feature_loss > 0.0);
    const auto header = dfl::ad::Checkpoint::load(enh.checkpoint).header;
    CHECK(header.at("loss") == "dfl");
    CHECK(header.at("aux_sha256") == aux_sha);

    const auto manifest = dfl::corpus::read_manifest(cfg.manifest_path());
    const auto& row = manifest.rows.back();
    const auto written = enhance(cfg, enh.checkpoint, cfg.corpus_dir() / row.path, dir.path / "enh");
    REQUIRE(written.size() == 1);
    const auto feat = read_features(written[0]);
    CHECK(feat.provenance == dfl::sha256_file(enh.checkpoint));
    CHECK(feat.features.bands == cfg.features.mel.bands);

    // Drop one condition from the manifest: that cell goes missing and the report is incomplete.
    auto partial = manifest;
    std::erase_if(partial.rows, [](const dfl::corpus::ManifestRow& r) {
      return r.split == "test" && r.noise_kind == dfl::corpus::NoiseKind::music && r.snr_db == 5.0;
    });
    const auto partial_path = cfg.corpus_dir() / "partial.tsv";
    dfl::corpus::write_manifest(partial_path, partial);
    const auto report = evaluate(cfg, aux.checkpoint, enh.checkpoint, partial_path);
    CHECK_FALSE(report.complete());
    const auto* cell = report.find("music", 5.0);
    REQUIRE(cell);
    CHECK_FALSE(cell->baseline);
    CHECK(report.find("music", 10.0)->enhanced);
  }
}
