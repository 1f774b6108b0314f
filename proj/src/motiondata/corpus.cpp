#include "mmm/motiondata/corpus.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <numbers>
#include <set>

#include "mmm/error.hpp"
#include "mmm/motiondata/io.hpp"
#include "mmm/numerics/rng.hpp"

namespace mmm::data {

namespace {

constexpr std::array<const char*, kVerbCount> kVerbNames = {"WALK", "RUN", "TURN", "WAVE", "SIT", "JUMP"};

// [verb][direction]
constexpr std::array<std::array<const char*, kDirectionCount>, kVerbCount> kPhrases = {{
    {"walks forward", "walks backward", "walks to the left", "walks to the right"},
    {"runs forward", "runs backward", "runs to the left", "runs to the right"},
    {"turns around to the left", "turns around to the right", "turns left", "turns right"},
    {"waves both hands in front", "waves both hands overhead", "waves with the left hand", "waves with the right hand"},
    {"sits down leaning forward", "sits down leaning back", "sits down leaning left", "sits down leaning right"},
    {"jumps forward", "jumps backward", "jumps to the left", "jumps to the right"},
}};

constexpr std::array<int, kVerbCount> kNominal = {60, 48, 40, 56, 44, 40};

constexpr float kPi = std::numbers::pi_v<float>;
constexpr int kBlendFrames = 10;

float smoothstep(float x) {
  x = std::clamp(x, 0.0f, 1.0f);
  return x * x * (3.0f - 2.0f * x);
}

// Unit travel direction in the body frame (x forward, z left).
std::pair<float, float> travel(Direction d) {
  switch (d) {
    case Direction::forward:
      return {1.0f, 0.0f};
    case Direction::backward:
      return {-1.0f, 0.0f};
    case Direction::left:
      return {0.0f, 1.0f};
    case Direction::right:
      return {0.0f, -1.0f};
  }
  return {1.0f, 0.0f};
}

struct Pose {
  std::array<float, 3> lh{0.0f, 0.05f, 0.22f};
  std::array<float, 3> rh{0.0f, 0.05f, -0.22f};
  std::array<float, 3> lf{0.0f, -1.0f, 0.12f};
  std::array<float, 3> rf{0.0f, -1.0f, -0.12f};
};

void write_pose(Motion& m, int t, const Pose& p, int joints) {
  const std::array<const std::array<float, 3>*, 4> js = {&p.lh, &p.rh, &p.lf, &p.rf};
  for (int j = 0; j < joints; ++j) {
    const auto& src = *js[static_cast<std::size_t>(j % 4)];
    for (int a = 0; a < 3; ++a) {
      m.at(t, joint_dim(j, a)) = src[static_cast<std::size_t>(a)];
    }
  }
}

// Raw features of one primitive, frame s of n, starting height h0.
void primitive_frame(const Primitive& p, int s, int n, float fps, float h0, Motion& m, int t, int joints) {
  const float tau = static_cast<float>(s) / fps;
  const float u = n > 1 ? static_cast<float>(s) / static_cast<float>(n - 1) : 0.0f;
  const auto [dx, dz] = travel(p.dir);
  const float side_scale = p.dir == Direction::forward ? 1.0f : 0.8f;
  Pose pose;
  float vx = 0.0f, vz = 0.0f, yaw = 0.0f, h = 1.0f;
  switch (p.verb) {
    case Verb::walk:
    case Verb::run: {
      const bool run = p.verb == Verb::run;
      const float speed = (run ? 3.2f : 1.3f) * side_scale;
      const float freq = run ? 2.8f : 1.8f;
      const float stride = run ? 0.4f : 0.25f;
      const float lift = run ? 0.2f : 0.08f;
      const float swing = run ? 0.3f : 0.15f;
      const float phi = 2.0f * kPi * freq * tau;
      const float sphi = std::sin(phi);
      vx = speed * dx;
      vz = speed * dz;
      h = (run ? 0.97f : 1.0f) + (run ? 0.04f : 0.02f) * std::cos(2.0f * phi);
      pose.lf[0] += stride * sphi * dx;
      pose.lf[2] += stride * sphi * dz;
      pose.rf[0] -= stride * sphi * dx;
      pose.rf[2] -= stride * sphi * dz;
      pose.lf[1] = -h + lift * std::max(0.0f, sphi);
      pose.rf[1] = -h + lift * std::max(0.0f, -sphi);
      pose.lh[0] -= swing * sphi;
      pose.rh[0] += swing * sphi;
      if (run) {
        pose.lh[1] += 0.15f;
        pose.rh[1] += 0.15f;
      }
      break;
    }
    case Verb::turn: {
      const float angle = p.dir == Direction::left ? kPi / 2 : p.dir == Direction::right ? -kPi / 2
                          : p.dir == Direction::forward                                 ? kPi
                                                                                        : -kPi;
      const float dur = static_cast<float>(n) / fps;
      // Bell-shaped rate whose integral over the span is `angle`.
      yaw = angle * kPi / (2.0f * dur) * std::sin(kPi * u);
      const float step = std::sin(2.0f * kPi * 1.5f * tau);
      pose.lf[1] = -h + 0.05f * std::max(0.0f, step);
      pose.rf[1] = -h + 0.05f * std::max(0.0f, -step);
      break;
    }
    case Verb::wave: {
      const float ramp = smoothstep(u / 0.15f) * smoothstep((1.0f - u) / 0.15f);
      const float osc = std::sin(2.0f * kPi * 2.0f * tau);
      auto raise = [&](std::array<float, 3>& hand, float side) {
        hand[1] += 0.65f * ramp;
        hand[2] += side * 0.15f * osc * ramp;
      };
      if (p.dir == Direction::left) {
        raise(pose.lh, 1.0f);
      } else if (p.dir == Direction::right) {
        raise(pose.rh, -1.0f);
      } else if (p.dir == Direction::forward) {
        for (auto* hand : {&pose.lh, &pose.rh}) {
          (*hand)[0] += 0.35f * ramp;
          (*hand)[1] += (0.35f + 0.1f * osc) * ramp;
        }
      } else {
        pose.lh[1] += 0.85f * ramp;
        pose.rh[1] += 0.85f * ramp;
        pose.lh[2] += 0.15f * osc * ramp;
        pose.rh[2] -= 0.15f * osc * ramp;
      }
      pose.lf[1] = pose.rf[1] = -h;
      break;
    }
    case Verb::sit: {
      const float e = smoothstep(u / 0.7f);
      h = h0 + (0.5f - h0) * e;
      pose.lf[0] = pose.rf[0] = 0.3f * e;
      pose.lf[1] = pose.rf[1] = -h;
      for (auto* hand : {&pose.lh, &pose.rh}) {
        (*hand)[0] += 0.25f * e;
      }
      switch (p.dir) {
        case Direction::forward:
          pose.lh[0] += 0.1f * e;
          pose.rh[0] += 0.1f * e;
          pose.lh[1] -= 0.1f * e;
          pose.rh[1] -= 0.1f * e;
          break;
        case Direction::backward:
          pose.lh[0] -= 0.4f * e;
          pose.rh[0] -= 0.4f * e;
          break;
        case Direction::left:
          pose.lh[2] += 0.15f * e;
          pose.rh[2] += 0.15f * e;
          break;
        case Direction::right:
          pose.lh[2] -= 0.15f * e;
          pose.rh[2] -= 0.15f * e;
          break;
      }
      break;
    }
    case Verb::jump: {
      const float dur = static_cast<float>(n) / fps;
      float tuck = 0.0f;
      if (u < 0.25f) {
        h = 1.0f - 0.2f * smoothstep(u / 0.25f);
      } else if (u < 0.7f) {
        const float a = (u - 0.25f) / 0.45f;
        tuck = 4.0f * a * (1.0f - a);
        h = 0.8f + 0.65f * tuck;
        const float v = 1.0f / (0.45f * dur);
        vx = v * dx;
        vz = v * dz;
      } else {
        h = 0.8f + 0.2f * smoothstep((u - 0.7f) / 0.3f);
      }
      const float ground = u >= 0.25f && u < 0.7f ? -0.8f + 0.25f * tuck : -h;
      pose.lf[1] = pose.rf[1] = ground;
      pose.lh[1] += 0.6f * tuck;
      pose.rh[1] += 0.6f * tuck;
      break;
    }
  }
  m.at(t, kRootVx) = vx;
  m.at(t, kRootVz) = vz;
  m.at(t, kRootYawRate) = yaw;
  m.at(t, kRootHeight) = h;
  write_pose(m, t, pose, joints);
}

}  // namespace

const char* verb_name(Verb v) { return kVerbNames.at(static_cast<std::size_t>(v)); }

std::string phrase(Verb v, Direction d) {
  return kPhrases.at(static_cast<std::size_t>(v)).at(static_cast<std::size_t>(d));
}

int nominal_frames(Verb v) { return kNominal.at(static_cast<std::size_t>(v)); }

std::string render_prompt(const std::vector<Primitive>& prims) {
  if (prims.empty()) {
    throw Error(ErrorKind::value, "render_prompt", "no primitives");
  }
  std::string text = "a figure";
  for (std::size_t i = 0; i < prims.size(); ++i) {
    text += i == 0 ? " " : " then ";
    text += phrase(prims[i].verb, prims[i].dir);
  }
  return text;
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::isalnum(uc)) {
      cur.push_back(static_cast<char>(std::tolower(uc)));
    } else if (!cur.empty()) {
      words.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) {
    words.push_back(std::move(cur));
  }
  return words;
}

std::vector<std::string> grammar_vocabulary() {
  std::set<std::string> vocab = {"a", "figure", "then"};
  for (const auto& row : kPhrases) {
    for (const char* p : row) {
      for (auto& w : split_words(p)) {
        vocab.insert(std::move(w));
      }
    }
  }
  return {vocab.begin(), vocab.end()};
}

void SynthConfig::validate() const {
  auto bad = [](const std::string& what) { throw Error(ErrorKind::value, "synth_config", what); };
  if (joints < 1) bad("joints must be >= 1");
  if (!(fps > 0.0f)) bad("fps must be positive");
  if (downsample < 1) bad("downsample must be >= 1");
  if (min_len < 1 || max_len < min_len) bad("need 1 <= min_len <= max_len");
  if (max_len % downsample != 0) bad("max_len must be a multiple of the downsample factor");
  if (max_primitives < 1) bad("max_primitives must be >= 1");
  if (noise < 0.0f || jitter < 0.0f || jitter >= 1.0f) bad("noise >= 0 and 0 <= jitter < 1 required");
  if (train_frac <= 0.0f || val_frac < 0.0f || train_frac + val_frac >= 1.0f) bad("split fractions must leave a test split");
}

nlohmann::json SynthConfig::to_json() const {
  return {{"joints", joints},       {"fps", fps},       {"min_len", min_len},       {"max_len", max_len},
          {"downsample", downsample}, {"max_primitives", max_primitives}, {"noise", noise}, {"jitter", jitter},
          {"train_frac", train_frac}, {"val_frac", val_frac}};
}

SynthConfig SynthConfig::from_json(const nlohmann::json& j) {
  SynthConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "joints") c.joints = value.get<int>();
    else if (key == "fps") c.fps = value.get<float>();
    else if (key == "min_len") c.min_len = value.get<int>();
    else if (key == "max_len") c.max_len = value.get<int>();
    else if (key == "downsample") c.downsample = value.get<int>();
    else if (key == "max_primitives") c.max_primitives = value.get<int>();
    else if (key == "noise") c.noise = value.get<float>();
    else if (key == "jitter") c.jitter = value.get<float>();
    else if (key == "train_frac") c.train_frac = value.get<float>();
    else if (key == "val_frac") c.val_frac = value.get<float>();
    else throw Error(ErrorKind::value, "config", "unknown key 'data." + key + "'");
  }
  c.validate();
  return c;
}

std::vector<Primitive> draw_primitives(const SynthConfig& cfg, std::uint64_t seed) {
  nn::Rng rng(seed);
  const int count = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.max_primitives)));
  std::vector<Primitive> prims;
  int total = 0;
  for (int i = 0; i < count; ++i) {
    Primitive p;
    do {
      p.verb = static_cast<Verb>(rng.below(kVerbCount));
    } while (!prims.empty() && prims.back().verb == p.verb);
    p.dir = static_cast<Direction>(rng.below(kDirectionCount));
    const float scale = rng.uniform(1.0f - cfg.jitter, 1.0f + cfg.jitter);
    p.frames = std::max(1, static_cast<int>(std::lround(static_cast<float>(nominal_frames(p.verb)) * scale)));
    total += p.frames;
    prims.push_back(p);
  }
  if (total > cfg.max_len || total < cfg.min_len) {
    const int target = std::clamp(total, cfg.min_len, cfg.max_len);
    int acc = 0;
    for (auto& p : prims) {
      p.frames = std::max(1, p.frames * target / total);
      acc += p.frames;
    }
    prims.back().frames = std::max(1, prims.back().frames + target - acc);
  }
  return prims;
}

Motion render_primitives(const std::vector<Primitive>& prims, const SynthConfig& cfg, std::uint64_t seed) {
  int total = 0;
  for (const auto& p : prims) {
    total += p.frames;
  }
  const int dims = cfg.dims();
  Motion m(total, dims, cfg.fps);
  Motion scratch(1, dims, cfg.fps);
  std::vector<float> prev(static_cast<std::size_t>(dims), 0.0f);
  bool have_prev = false;
  int t = 0;
  for (const auto& p : prims) {
    const float h0 = have_prev ? prev[kRootHeight] : 1.0f;
    for (int s = 0; s < p.frames; ++s, ++t) {
      primitive_frame(p, s, p.frames, cfg.fps, h0, scratch, 0, cfg.joints);
      // Ease out of the previous primitive's final frame.
      const float w = have_prev ? smoothstep(static_cast<float>(s + 1) / kBlendFrames) : 1.0f;
      for (int d = 0; d < dims; ++d) {
        const float raw = scratch.at(0, d);
        const bool keep_raw = p.verb == Verb::sit && d == kRootHeight;
        m.at(t, d) = keep_raw ? raw : prev[static_cast<std::size_t>(d)] + (raw - prev[static_cast<std::size_t>(d)]) * w;
      }
    }
    for (int d = 0; d < dims; ++d) {
      prev[static_cast<std::size_t>(d)] = m.at(t - 1, d);
    }
    have_prev = true;
  }
  nn::Rng rng(seed);
  for (int f = 0; f < total; ++f) {
    for (int d = 0; d < dims; ++d) {
      const float eps = static_cast<float>(rng.normal()) * cfg.noise;
      if (d != kRootHeight) {
        m.at(f, d) += eps;
      }
    }
  }
  return m;
}

Item synth_item(const SynthConfig& cfg, std::uint64_t item_seed) {
  const auto prims = draw_primitives(cfg, nn::Rng::derive(item_seed, 0));
  Item item;
  item.motion = render_primitives(prims, cfg, nn::Rng::derive(item_seed, 1));
  item.prompt.text = render_prompt(prims);
  for (const auto& p : prims) {
    item.prompt.verb_ids.push_back(static_cast<int>(p.verb));
    item.prompt.direction_ids.push_back(static_cast<int>(p.dir));
    item.primitive_frames.push_back(p.frames);
  }
  item.prompt.target_frames = item.motion.frames;
  return item;
}

std::vector<const Motion*> motions_of(const Dataset& ds, const std::vector<int>& indices) {
  std::vector<const Motion*> out;
  out.reserve(indices.size());
  for (int i : indices) {
    out.push_back(&ds.items.at(static_cast<std::size_t>(i)).motion);
  }
  return out;
}

Dataset synth_dataset(int n_items, std::uint64_t seed, const SynthConfig& cfg) {
  cfg.validate();
  if (n_items < 1) {
    throw Error(ErrorKind::value, "synth_dataset", "n_items must be >= 1");
  }
  Dataset ds;
  ds.cfg = cfg;
  ds.seed = seed;
  ds.items.reserve(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    ds.items.push_back(synth_item(cfg, nn::Rng::derive(seed, static_cast<std::uint64_t>(i))));
  }
  std::vector<int> order(static_cast<std::size_t>(n_items));
  for (int i = 0; i < n_items; ++i) {
    order[static_cast<std::size_t>(i)] = i;
  }
  nn::Rng shuffle(nn::Rng::derive(seed, ~0ull));
  for (int i = n_items - 1; i > 0; --i) {
    std::swap(order[static_cast<std::size_t>(i)], order[shuffle.below(static_cast<std::uint64_t>(i) + 1)]);
  }
  int n_train = std::max(1, static_cast<int>(std::lround(cfg.train_frac * static_cast<float>(n_items))));
  int n_val = static_cast<int>(std::lround(cfg.val_frac * static_cast<float>(n_items)));
  if (n_items >= 3) {
    n_val = std::max(1, n_val);
    n_train = std::min(n_train, n_items - n_val - 1);
  } else {
    n_train = n_items;
    n_val = 0;
  }
  ds.train.assign(order.begin(), order.begin() + n_train);
  ds.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  ds.test.assign(order.begin() + n_train + n_val, order.end());
  for (auto* split : {&ds.train, &ds.val, &ds.test}) {
    std::sort(split->begin(), split->end());
  }
  const auto train_motions = motions_of(ds, ds.train);
  ds.stats = NormStats::fit(train_motions);
  return ds;
}

namespace {

std::string motion_file(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "motions/%06d.mmot", id);
  return buf;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::filesystem::path& dir, const std::vector<std::string>& provenance) {
  std::filesystem::create_directories(dir / "motions");
  nlohmann::json items = nlohmann::json::array();
  std::vector<std::string> split_of(ds.items.size(), "train");
  for (int i : ds.val) split_of[static_cast<std::size_t>(i)] = "val";
  for (int i : ds.test) split_of[static_cast<std::size_t>(i)] = "test";
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    const Item& it = ds.items[i];
    const std::string file = motion_file(static_cast<int>(i));
    save_motion(dir / file, it.motion, provenance);
    items.push_back({{"id", i},
                     {"file", file},
                     {"text", it.prompt.text},
                     {"verb_ids", it.prompt.verb_ids},
                     {"direction_ids", it.prompt.direction_ids},
                     {"frames", it.prompt.target_frames},
                     {"primitive_frames", it.primitive_frames},
                     {"split", split_of[i]}});
  }
  nlohmann::json manifest = {{"format", "mmm-dataset"},
                             {"version", 1},
                             {"seed", ds.seed},
                             {"config", ds.cfg.to_json()},
                             {"provenance", provenance},
                             {"stats", {{"mean", ds.stats.mean}, {"std", ds.stats.std}}},
                             {"items", items}};
  write_file(dir / "dataset.json", manifest.dump(1) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(dir / "dataset.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "load_dataset", std::string("dataset.json: ") + e.what());
  }
  if (j.value("format", "") != "mmm-dataset") {
    throw Error(ErrorKind::format, "load_dataset", "not a dataset manifest");
  }
  Dataset ds;
  try {
    ds.cfg = SynthConfig::from_json(j.at("config"));
    ds.seed = j.at("seed").get<std::uint64_t>();
    ds.stats.mean = j.at("stats").at("mean").get<std::vector<float>>();
    ds.stats.std = j.at("stats").at("std").get<std::vector<float>>();
    for (const auto& e : j.at("items")) {
      Item it;
      it.motion = load_motion(dir / e.at("file").get<std::string>());
      it.prompt.text = e.at("text").get<std::string>();
      it.prompt.verb_ids = e.at("verb_ids").get<std::vector<int>>();
      it.prompt.direction_ids = e.at("direction_ids").get<std::vector<int>>();
      it.prompt.target_frames = e.at("frames").get<int>();
      it.primitive_frames = e.at("primitive_frames").get<std::vector<int>>();
      const std::string split = e.at("split").get<std::string>();
      const int id = static_cast<int>(ds.items.size());
      (split == "train" ? ds.train : split == "val" ? ds.val : ds.test).push_back(id);
      if (it.motion.dims != ds.cfg.dims()) {
        throw Error(ErrorKind::format, "load_dataset", "item " + std::to_string(id) + " has wrong dims");
      }
      ds.items.push_back(std::move(it));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::format, "load_dataset", std::string("dataset.json: ") + e.what());
  }
  return ds;
}

}  // namespace mmm::data
