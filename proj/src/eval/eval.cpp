#include "mmm/eval/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <Eigen/Dense>

#include "mmm/error.hpp"
#include "mmm/numerics/checkpoint.hpp"
#include "mmm/numerics/ops.hpp"
#include "mmm/numerics/optim.hpp"
#include "mmm/tokenizer/tokenizer.hpp"

namespace mmm::eval {

namespace {

Eigen::MatrixXd to_matrix(const Features& f, const char* name) {
  if (f.size() < 2) {
    throw Error(ErrorKind::value, "frechet_distance", std::string(name) + " needs at least 2 samples");
  }
  const std::size_t d = f.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i].size() != d || d == 0) {
      throw Error(ErrorKind::shape, "frechet_distance", "ragged feature rows");
    }
    for (std::size_t j = 0; j < d; ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i][j];
    }
  }
  return m;
}

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::shape, "eval", "feature vectors differ in length");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += (a[i] - b[i]) * (a[i] - b[i]);
  }
  return std::sqrt(s);
}

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<int> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

std::string hex_hash(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double frechet_distance(const Features& a, const Features& b) {
  const Eigen::MatrixXd A = to_matrix(a, "first set");
  const Eigen::MatrixXd B = to_matrix(b, "second set");
  if (A.cols() != B.cols()) {
    throw Error(ErrorKind::shape, "frechet_distance", "feature dims differ");
  }
  const Eigen::Index d = A.cols();
  const Eigen::VectorXd mu1 = A.colwise().mean();
  const Eigen::VectorXd mu2 = B.colwise().mean();
  const Eigen::MatrixXd ca = A.rowwise() - mu1.transpose();
  const Eigen::MatrixXd cb = B.rowwise() - mu2.transpose();
  const Eigen::MatrixXd eps = 1e-6 * Eigen::MatrixXd::Identity(d, d);
  const Eigen::MatrixXd s1 = (ca.transpose() * ca) / static_cast<double>(A.rows() - 1) + eps;
  const Eigen::MatrixXd s2 = (cb.transpose() * cb) / static_cast<double>(B.rows() - 1) + eps;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> e1(s1);
  const Eigen::VectorXd l1 = e1.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd r1 = e1.eigenvectors() * l1.asDiagonal() * e1.eigenvectors().transpose();
  Eigen::MatrixXd m = r1 * s2 * r1;
  m = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(m, Eigen::EigenvaluesOnly);
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < d; ++i) {
    const double lam = em.eigenvalues()(i);
    if (lam < -1e-6) {
      throw Error(ErrorKind::value, "frechet_distance", "covariance product has eigenvalue " + std::to_string(lam));
    }
    tr_sqrt += std::sqrt(std::max(lam, 0.0));
  }
  const double fd = (mu1 - mu2).squaredNorm() + s1.trace() + s2.trace() - 2.0 * tr_sqrt;
  return std::max(fd, 0.0);
}

Diversity diversity(const Features& feats, int n_pairs, nn::Rng& rng) {
  const int N = static_cast<int>(feats.size());
  if (N < 2) {
    throw Error(ErrorKind::value, "diversity", "needs at least 2 features");
  }
  if (n_pairs < 1) {
    throw Error(ErrorKind::value, "diversity", "n_pairs must be >= 1");
  }
  Diversity d;
  double sum = 0.0;
  if (n_pairs <= N / 2) {
    std::vector<int> perm(static_cast<std::size_t>(N));
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = 0; i < 2 * n_pairs; ++i) {
      const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(N - i)));
      std::swap(perm[i], perm[j]);
    }
    for (int i = 0; i < n_pairs; ++i) {
      sum += distance(feats[perm[2 * i]], feats[perm[2 * i + 1]]);
    }
  } else {
    d.with_replacement = true;
    for (int i = 0; i < n_pairs; ++i) {
      const int a = static_cast<int>(rng.below(static_cast<std::uint64_t>(N)));
      int b = static_cast<int>(rng.below(static_cast<std::uint64_t>(N - 1)));
      b += b >= a;
      sum += distance(feats[a], feats[b]);
    }
  }
  d.value = sum / n_pairs;
  return d;
}

double mmodality(const std::function<std::vector<double>(const std::string&, std::uint64_t)>& sample,
                 const std::vector<std::string>& prompts, int pairs, std::uint64_t seed) {
  if (prompts.empty() || pairs < 1) {
    throw Error(ErrorKind::value, "mmodality", "needs prompts and pairs >= 1");
  }
  double total = 0.0;
  for (std::size_t p = 0; p < prompts.size(); ++p) {
    const std::uint64_t ps = nn::Rng::derive(seed, p);
    double s = 0.0;
    for (int i = 0; i < pairs; ++i) {
      s += distance(sample(prompts[p], nn::Rng::derive(ps, 2 * i)), sample(prompts[p], nn::Rng::derive(ps, 2 * i + 1)));
    }
    total += s / pairs;
  }
  return total / static_cast<double>(prompts.size());
}

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorKind::value, "spearman", "needs two equal-length series of >= 2 values");
  }
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    return 0.0;
  }
  return sxy / std::sqrt(sxx * syy);
}

std::vector<AitsRow> aits_bench(const tf::Transformer& model, const std::vector<int>& lengths, int repeats,
                                const gen::ScheduleConfig& sched, const gen::SamplingConfig& sampling,
                                std::uint64_t seed, const std::string& prompt) {
  if (repeats < 1 || lengths.empty()) {
    throw Error(ErrorKind::value, "bench", "needs lengths and repeats >= 1");
  }
  using clock = std::chrono::steady_clock;
  const tf::TextEmbedding text = model.embed_text(prompt);
  gen::parallel_decode(model, text, lengths.front(), sched, sampling, seed);
  std::vector<AitsRow> rows;
  for (std::size_t i = 0; i < lengths.size(); ++i) {
    std::vector<double> t;
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = clock::now();
      gen::parallel_decode(model, text, lengths[i], sched, sampling, nn::Rng::derive(seed, i * repeats + r));
      t.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    const double mean = std::accumulate(t.begin(), t.end(), 0.0) / repeats;
    double var = 0.0;
    for (double v : t) var += (v - mean) * (v - mean);
    const double sd = repeats > 1 ? std::sqrt(var / (repeats - 1)) : 0.0;
    rows.push_back({lengths[i], mean, mean > 0.0 ? sd / mean : 0.0});
  }
  return rows;
}

double alignment_accuracy(const data::VerbClassifier& clf, const std::vector<data::Motion>& motions,
                          const std::vector<std::vector<int>>& verb_ids) {
  if (motions.size() != verb_ids.size() || motions.empty()) {
    throw Error(ErrorKind::value, "alignment_accuracy", "one verb list per motion required");
  }
  int hits = 0;
  for (std::size_t i = 0; i < motions.size(); ++i) {
    hits += clf.matches(motions[i], verb_ids[i]);
  }
  return static_cast<double>(hits) / static_cast<double>(motions.size());
}

data::NormStats frame_delta_stats(const data::Dataset& ds, const std::vector<int>& items) {
  std::vector<double> sum, sq;
  long long n = 0;
  for (int i : items) {
    const data::Motion& m = ds.items.at(static_cast<std::size_t>(i)).motion;
    if (sum.empty()) {
      sum.assign(static_cast<std::size_t>(m.dims), 0.0);
      sq.assign(static_cast<std::size_t>(m.dims), 0.0);
    } else if (static_cast<int>(sum.size()) != m.dims) {
      throw Error(ErrorKind::shape, "frame_delta_stats", "items differ in dims");
    }
    for (int t = 1; t < m.frames; ++t, ++n) {
      for (int d = 0; d < m.dims; ++d) {
        const double x = static_cast<double>(m.at(t, d)) - m.at(t - 1, d);
        sum[d] += x;
        sq[d] += x * x;
      }
    }
  }
  if (n == 0) throw Error(ErrorKind::value, "frame_delta_stats", "no frame pairs");
  data::NormStats st;
  for (std::size_t d = 0; d < sum.size(); ++d) {
    const double mu = sum[d] / n;
    const double sd = std::sqrt(std::max(0.0, sq[d] / n - mu * mu));
    st.mean.push_back(static_cast<float>(mu));
    st.std.push_back(sd < 1e-8 ? 1.0f : static_cast<float>(sd));
  }
  return st;
}

std::vector<double> frame_jumps(const data::Motion& m, const data::NormStats& scale) {
  if (static_cast<int>(scale.std.size()) != m.dims) {
    throw Error(ErrorKind::shape, "frame_jumps", "scale does not match the motion's dims");
  }
  std::vector<double> out;
  for (int t = 1; t < m.frames; ++t) {
    double j = 0.0;
    for (int d = 0; d < m.dims; ++d) {
      j = std::max(j, std::abs(static_cast<double>(m.at(t, d)) - m.at(t - 1, d)) / scale.std[d]);
    }
    out.push_back(j);
  }
  return out;
}

double corpus_jump_quantile(const data::Dataset& ds, const std::vector<int>& items, const data::NormStats& scale,
                            double q) {
  if (!(q >= 0.0 && q <= 1.0)) {
    throw Error(ErrorKind::value, "corpus_jump_quantile", "q must lie in [0,1]");
  }
  std::vector<double> all;
  for (int i : items) {
    const auto j = frame_jumps(ds.items.at(static_cast<std::size_t>(i)).motion, scale);
    all.insert(all.end(), j.begin(), j.end());
  }
  if (all.empty()) {
    throw Error(ErrorKind::value, "corpus_jump_quantile", "no frame pairs");
  }
  const std::size_t k = std::min(all.size() - 1, static_cast<std::size_t>(std::ceil(q * all.size())) - (q > 0.0));
  std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  return all[k];
}

double seam_jump(const data::Motion& m, const std::vector<int>& seams, const data::NormStats& scale) {
  const auto j = frame_jumps(m, scale);
  double worst = 0.0;
  for (int s : seams) {
    if (s < 1 || s >= m.frames) {
      throw Error(ErrorKind::value, "seam_jump", "seam frame " + std::to_string(s) + " outside the motion");
    }
    worst = std::max(worst, j[static_cast<std::size_t>(s - 1)]);
  }
  return worst;
}

FeatureExtractor::FeatureExtractor(int in_dims, std::uint64_t seed) : in_dims_(in_dims) {
  if (in_dims < 1) {
    throw Error(ErrorKind::value, "feature_extractor", "in_dims must be >= 1");
  }
  nn::Rng rng(seed);
  c1_ = nn::Conv1d::make(params_, "fx.c1", kKernel, in_dims, kWidth, 1, kKernel - 1, 0, rng);
  c2_ = nn::Conv1d::make(params_, "fx.c2", kKernel, kWidth, kWidth, 1, kKernel - 1, 0, rng);
  head_ = nn::Linear::make(params_, "fx.head", kWidth, in_dims, rng);
  mean_ = params_.add("norm.mean", nn::Tensor::zeros({in_dims}));
  std_ = params_.add("norm.std", nn::Tensor::full({in_dims}, 1.0f));
}

void FeatureExtractor::set_stats(const data::NormStats& stats) {
  if (static_cast<int>(stats.mean.size()) != in_dims_ || static_cast<int>(stats.std.size()) != in_dims_) {
    throw Error(ErrorKind::shape, "feature_extractor", "stats do not match in_dims");
  }
  std::copy(stats.mean.begin(), stats.mean.end(), mean_.mutable_values().begin());
  std::copy(stats.std.begin(), stats.std.end(), std_.mutable_values().begin());
}

nn::Tensor FeatureExtractor::hidden(const nn::Tensor& x) const {
  return nn::relu(c2_(nn::relu(c1_(x))));
}

nn::Tensor FeatureExtractor::loss(const nn::Tensor& x) const {
  const int T = x.dim(1);
  if (x.rank() != 3 || T < 2 || x.dim(2) != in_dims_) {
    throw Error(ErrorKind::shape, "feature_extractor", "expected [B, T>=2, " + std::to_string(in_dims_) + "]");
  }
  const nn::Tensor pred = head_(nn::narrow(hidden(x), 1, 0, T - 1));
  return nn::mse(pred, nn::narrow(x, 1, 1, T - 1));
}

std::vector<double> FeatureExtractor::features(const data::Motion& raw) const {
  if (raw.dims != in_dims_) {
    throw Error(ErrorKind::shape, "feature_extractor", "motion has " + std::to_string(raw.dims) + " dims, expected " +
                                                           std::to_string(in_dims_));
  }
  raw.validate("feature_extractor");
  nn::NoGradGuard ng;
  data::NormStats st{{mean_.values().begin(), mean_.values().end()}, {std_.values().begin(), std_.values().end()}};
  const data::Motion m = data::normalize(raw, st);
  const nn::Tensor h = hidden(nn::Tensor::from({1, m.frames, m.dims}, m.values));
  std::vector<double> f(kWidth, 0.0);
  const float* hv = h.values().data();
  for (int t = 0; t < m.frames; ++t) {
    for (int k = 0; k < kWidth; ++k) {
      f[k] += hv[static_cast<std::size_t>(t) * kWidth + k];
    }
  }
  for (double& v : f) {
    v /= m.frames;
  }
  return f;
}

Features FeatureExtractor::features(const std::vector<data::Motion>& raw) const {
  Features out;
  out.reserve(raw.size());
  for (const auto& m : raw) {
    out.push_back(features(m));
  }
  return out;
}

void FeatureExtractor::save(const std::filesystem::path& path, const nlohmann::json& meta) const {
  nn::save_checkpoint(path, kMagic, {{"in_dims", in_dims_}, {"meta", meta}}, params_);
}

FeatureExtractor FeatureExtractor::load(const std::filesystem::path& path) {
  const nn::Checkpoint ck = nn::load_checkpoint(path, kMagic);
  FeatureExtractor fx(ck.config.at("in_dims").get<int>(), 0);
  nn::restore(fx.params_, ck);
  return fx;
}

FeatureExtractor train_feature_extractor(const data::Dataset& ds, const ExtractorTrainConfig& cfg, std::uint64_t seed) {
  const int dims = data::dims_for_joints(ds.cfg.joints);
  FeatureExtractor fx(dims, nn::Rng::derive(seed, 0));
  fx.set_stats(ds.stats);
  nn::Rng rng(nn::Rng::derive(seed, 1));
  nn::Adam opt(fx.params(), nn::AdamConfig{.lr = cfg.lr});
  for (int step = 0; step < cfg.steps; ++step) {
    const nn::Tensor x = vq::sample_windows(ds, ds.train, cfg.batch, cfg.window, rng);
    const nn::Tensor l = fx.loss(x);
    if (!std::isfinite(l.item())) {
      throw Error(ErrorKind::diverged, "train_feature_extractor", "non-finite loss at step " + std::to_string(step));
    }
    fx.params().zero_grad();
    l.backward();
    opt.step();
  }
  return fx;
}

std::filesystem::path shipped_extractor_path() { return std::filesystem::path(MMM_ASSET_DIR) / "feature_extractor.ckpt"; }

nlohmann::json EvalReport::to_json() const {
  for (double v : {fid, diversity, mmodality, alignment_acc, aits}) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::value, "eval_report", "non-finite metric");
    }
  }
  return {{"fid", fid},
          {"diversity", diversity},
          {"diversity_with_replacement", diversity_with_replacement},
          {"mmodality", mmodality},
          {"alignment_acc", alignment_acc},
          {"aits", aits},
          {"config_hash", config_hash},
          {"extractor_hash", extractor_hash},
          {"seed", seed},
          {"n_samples", n_samples}};
}

}  // namespace mmm::eval
