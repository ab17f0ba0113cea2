#include <CLI11.hpp>
#include <iostream>

#include "dfl/pipeline/pipeline.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace dfl;

namespace {

// Training allocates and frees large tensors every step; keep them on the heap
// instead of round-tripping through mmap.
void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();

  CLI::App app{"Feature-domain speech enhancement with deep feature loss"};
  app.require_subcommand(1);
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<fs::path> out_dir;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "global seed, overrides the config");
  app.add_option("--out", out_dir, "output directory, overrides the config");

  auto* gen = app.add_subcommand("gen-corpus", "synthesize the parallel corpus and test grid");
  auto* aux = app.add_subcommand("train-aux", "train the auxiliary speaker network");

  auto* enh = app.add_subcommand("train-enhancer", "train an enhancement network");
  std::string loss_name = "dfl", net_name;
  std::optional<fs::path> aux_ckpt;
  enh->add_option("--loss", loss_name, "fl, dfl or dfl+fl")->check(CLI::IsMember({"fl", "dfl", "dfl+fl"}));
  enh->add_option("--net", net_name, "can or edn")->check(CLI::IsMember({"can", "edn"}));
  enh->add_option("--aux-checkpoint", aux_ckpt, "frozen auxiliary network")->check(CLI::ExistingFile);

  auto* enhance_cmd = app.add_subcommand("enhance", "write enhanced feature files");
  fs::path enh_ckpt, enh_input, enh_out = "enhanced";
  enhance_cmd->add_option("checkpoint", enh_ckpt)->required()->check(CLI::ExistingFile);
  enhance_cmd->add_option("input", enh_input, "WAV file or manifest")->required()->check(CLI::ExistingFile);
  enhance_cmd->add_option("-o,--output-dir", enh_out);

  auto* eval_cmd = app.add_subcommand("evaluate", "verification metrics with and without enhancement");
  std::optional<fs::path> eval_aux, eval_enh, eval_manifest;
  eval_cmd->add_option("--aux-checkpoint", eval_aux)->check(CLI::ExistingFile);
  eval_cmd->add_option("--enhancer", eval_enh)->check(CLI::ExistingFile);
  eval_cmd->add_option("--manifest", eval_manifest)->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    pipeline::RunConfig config = config_path ? pipeline::load_run_config(*config_path) : pipeline::RunConfig{};
    if (seed) config.apply_seed(*seed);
    if (out_dir) config.out_dir = *out_dir;
    fs::create_directories(config.out_dir);

    if (gen->parsed()) {
      const auto s = pipeline::gen_corpus(config);
      std::cout << "speakers " << s.speakers << "\nclean utterances " << s.clean_utterances << " ("
                << s.clean_hours << " h)\nnoisy utterances " << s.noisy_utterances << "\ntest conditions "
                << s.test_conditions << "\nfiles written " << s.files_written << "\nmanifest "
                << config.manifest_path().string() << '\n';
    } else if (aux->parsed()) {
      const auto r = pipeline::train_aux(config, &std::cout);
      std::cout << "checkpoint " << r.checkpoint.string() << '\n';
    } else if (enh->parsed()) {
      const auto kind = net_name.empty() ? config.enhancer : nets::enhancer_kind_from_string(net_name);
      const auto r = pipeline::train_enhancer(config, kind, train::loss_kind_from_string(loss_name), aux_ckpt, &std::cout);
      std::cout << "checkpoint " << r.checkpoint.string() << '\n';
    } else if (enhance_cmd->parsed()) {
      const auto written = pipeline::enhance(config, enh_ckpt, enh_input, enh_out);
      std::cout << "wrote " << written.size() << " feature files to " << enh_out.string() << '\n';
    } else if (eval_cmd->parsed()) {
      const auto aux_path = eval_aux.value_or(config.aux_checkpoint());
      const auto report =
          pipeline::evaluate(config, aux_path, eval_enh, eval_manifest.value_or(config.manifest_path()));
      const auto stem = report.has_enhanced() ? report.enhancer_label : std::string("baseline");
      pipeline::write_report(report, config.report_dir(), stem);
      std::cout << report.table();
      if (!report.complete()) {
        std::cerr << "error: some requested cells could not be computed\n";
        return 1;
      }
    }
  } catch (const pipeline::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
