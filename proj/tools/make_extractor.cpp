// Trains the frozen evaluation feature extractor shipped in assets/.
// Deterministic: the same arguments reproduce the same file byte for byte.

#include <iostream>

#include "CLI11.hpp"
#include "mmm/cli/run_config.hpp"
#include "mmm/error.hpp"
#include "mmm/numerics/tensor.hpp"

using namespace mmm;

int main(int argc, char** argv) {
  nn::retain_heap_memory();
  CLI::App app{"Train the evaluation feature extractor"};
  app.option_defaults()->always_capture_default();
  const cli::RunConfig defaults = cli::RunConfig::defaults();
  std::string out = eval::shipped_extractor_path().string();
  int items = defaults.data.items;
  std::uint64_t data_seed = 0;
  std::uint64_t seed = 0;
  eval::ExtractorTrainConfig cfg = defaults.eval.extractor;
  app.add_option("-o,--out", out, "Output checkpoint");
  app.add_option("--items", items, "Corpus size");
  app.add_option("--data-seed", data_seed, "Corpus seed");
  app.add_option("--seed", seed, "Training seed");
  app.add_option("--steps", cfg.steps, "Training steps");
  CLI11_PARSE(app, argc, argv);
  try {
    const auto ds = data::synth_dataset(items, data_seed, defaults.data.synth);
    const auto fx = eval::train_feature_extractor(ds, cfg, seed);
    fx.save(out, {{"items", items}, {"data_seed", data_seed}, {"seed", seed}, {"steps", cfg.steps},
                  {"synth", defaults.data.synth.to_json()}});
    std::cout << "wrote " << out << " hash " << eval::hex_hash(fx.hash()) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
