#include "mmm/cli/run_config.hpp"

#include "mmm/error.hpp"
#include "mmm/motiondata/io.hpp"

namespace mmm::cli {

namespace {

using nlohmann::json;

json editing_json(const EditingSection& e) {
  return {{"transition_tokens", e.long_sequence.transition_tokens},
          {"context_tokens", e.long_sequence.context_tokens},
          {"lower_keep_fraction", e.body.lower_keep_fraction},
          {"inbetween_head", e.inbetween_head},
          {"inbetween_tail", e.inbetween_tail}};
}

EditingSection editing_from_json(const json& j) {
  EditingSection e;
  for (const auto& [key, v] : j.items()) {
    if (key == "transition_tokens") e.long_sequence.transition_tokens = v.get<int>();
    else if (key == "context_tokens") e.long_sequence.context_tokens = v.get<int>();
    else if (key == "lower_keep_fraction") e.body.lower_keep_fraction = v.get<double>();
    else if (key == "inbetween_head") e.inbetween_head = v.get<double>();
    else if (key == "inbetween_tail") e.inbetween_tail = v.get<double>();
    else throw Error(ErrorKind::value, "config", "unknown key 'editing." + key + "'");
  }
  return e;
}

json extractor_json(const eval::ExtractorTrainConfig& c) {
  return {{"steps", c.steps}, {"batch", c.batch}, {"window", c.window}, {"lr", c.lr}};
}

eval::ExtractorTrainConfig extractor_from_json(const json& j) {
  eval::ExtractorTrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "steps") c.steps = v.get<int>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "window") c.window = v.get<int>();
    else if (key == "lr") c.lr = v.get<float>();
    else throw Error(ErrorKind::value, "config", "unknown key 'eval.extractor." + key + "'");
  }
  return c;
}

json eval_json(const EvalSection& e) {
  return {{"n_samples", e.n_samples},
          {"diversity_pairs", e.diversity_pairs},
          {"mmodality_prompts", e.mmodality_prompts},
          {"mmodality_pairs", e.mmodality_pairs},
          {"bench_lengths", e.bench_lengths},
          {"bench_repeats", e.bench_repeats},
          {"extractor", extractor_json(e.extractor)}};
}

EvalSection eval_from_json(const json& j) {
  EvalSection e;
  for (const auto& [key, v] : j.items()) {
    if (key == "n_samples") e.n_samples = v.get<int>();
    else if (key == "diversity_pairs") e.diversity_pairs = v.get<int>();
    else if (key == "mmodality_prompts") e.mmodality_prompts = v.get<int>();
    else if (key == "mmodality_pairs") e.mmodality_pairs = v.get<int>();
    else if (key == "bench_lengths") e.bench_lengths = v.get<std::vector<int>>();
    else if (key == "bench_repeats") e.bench_repeats = v.get<int>();
    else if (key == "extractor") e.extractor = extractor_from_json(v);
    else throw Error(ErrorKind::value, "config", "unknown key 'eval." + key + "'");
  }
  return e;
}

// Splits the nested "train" object off a model section.
std::pair<json, json> split_train(const json& section) {
  json model = section;
  json train = json::object();
  if (model.contains("train")) {
    train = model.at("train");
    model.erase("train");
  }
  return {model, train};
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.tokenizer.model.in_dims = c.data.synth.dims();
  c.tokenizer.model.d_model = 32;
  c.transformer.model.d_model = 64;
  c.transformer.model.layers = 4;
  return c;
}

void RunConfig::validate() const {
  if (data.items < 2) throw Error(ErrorKind::value, "config", "data.items must be >= 2");
  data.synth.validate();
  tokenizer.model.validate();
  tokenizer.train.validate(tokenizer.model.downsample);
  transformer.model.validate();
  transformer.train.validate();
  schedule.validate();
  sampling.validate();
  editing.long_sequence.validate();
  editing.body.validate();
  if (!(editing.inbetween_head >= 0.0 && editing.inbetween_tail >= 0.0 &&
        editing.inbetween_head + editing.inbetween_tail <= 1.0)) {
    throw Error(ErrorKind::value, "config", "editing.inbetween_head/tail must be >= 0 and sum to <= 1");
  }
  if (eval.n_samples < 2 || eval.diversity_pairs < 1 || eval.mmodality_prompts < 1 || eval.mmodality_pairs < 1 ||
      eval.bench_repeats < 1 || eval.bench_lengths.empty()) {
    throw Error(ErrorKind::value, "config", "eval counts must be positive (n_samples >= 2)");
  }
  if (tokenizer.model.in_dims != data.synth.dims()) {
    throw Error(ErrorKind::value, "config", "tokenizer.in_dims must equal the corpus feature dims (" +
                                                std::to_string(data.synth.dims()) + ")");
  }
  if (tokenizer.model.downsample != data.synth.downsample) {
    throw Error(ErrorKind::value, "config", "tokenizer.downsample must equal data.downsample");
  }
  if (transformer.model.K != tokenizer.model.K) {
    throw Error(ErrorKind::value, "config", "transformer.K must equal tokenizer.K");
  }
  if (transformer.model.max_tokens != data.synth.max_len / data.synth.downsample) {
    throw Error(ErrorKind::value, "config", "transformer.max_tokens must equal data.max_len / data.downsample");
  }
  if (schedule.M != transformer.model.max_tokens) {
    throw Error(ErrorKind::value, "config", "schedule.M must equal transformer.max_tokens");
  }
}

json RunConfig::to_json() const {
  json tok = tokenizer.model.to_json();
  tok["train"] = tokenizer.train.to_json();
  json trf = transformer.model.to_json();
  trf["train"] = transformer.train.to_json();
  json d = data.synth.to_json();
  d["items"] = data.items;
  return {{"data", d},
          {"tokenizer", tok},
          {"transformer", trf},
          {"schedule", schedule.to_json()},
          {"sampling", sampling.to_json()},
          {"editing", editing_json(editing)},
          {"eval", eval_json(eval)}};
}

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw Error(ErrorKind::value, "config", "run config must be a JSON object");
  json merged = defaults().to_json();
  for (const auto& [key, v] : j.items()) {
    if (!merged.contains(key)) throw Error(ErrorKind::value, "config", "unknown section '" + key + "'");
    if (!v.is_object()) throw Error(ErrorKind::value, "config", "section '" + key + "' must be an object");
  }
  merged.merge_patch(j);
  RunConfig c;
  try {
    json d = merged.at("data");
    c.data.items = d.at("items").get<int>();
    d.erase("items");
    c.data.synth = data::SynthConfig::from_json(d);
    const auto [tok, tok_train] = split_train(merged.at("tokenizer"));
    c.tokenizer.model = vq::TokenizerConfig::from_json(tok);
    c.tokenizer.train = vq::VqTrainConfig::from_json(tok_train);
    const auto [trf, trf_train] = split_train(merged.at("transformer"));
    c.transformer.model = tf::TransformerConfig::from_json(trf);
    c.transformer.train = tf::MaskedTrainConfig::from_json(trf_train);
    c.schedule = gen::ScheduleConfig::from_json(merged.at("schedule"));
    c.sampling = gen::SamplingConfig::from_json(merged.at("sampling"));
    c.editing = editing_from_json(merged.at("editing"));
    c.eval = eval_from_json(merged.at("eval"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::value, "config", e.what());
  }
  c.validate();
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(data::read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::format, "config", path.string() + ": " + e.what());
  }
  return from_json(j);
}

void RunConfig::set(const std::string& path, const std::string& value) {
  json j = to_json();
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(key)) {
      throw Error(ErrorKind::value, "config", "unknown key '" + path + "'");
    }
    node = &(*node)[key];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  json parsed = json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? json(value) : parsed;
  *this = from_json(j);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string RunConfig::hash() const { return eval::hex_hash(fnv1a(to_json().dump())); }

}  // namespace mmm::cli
