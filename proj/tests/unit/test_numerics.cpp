#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>

#include "doctest.h"
#include "mmm/error.hpp"
#include "mmm/numerics/checkpoint.hpp"
#include "mmm/numerics/grad_check.hpp"
#include "mmm/numerics/layers.hpp"
#include "mmm/numerics/ops.hpp"
#include "mmm/numerics/optim.hpp"

using namespace mmm::nn;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, float lo = -1.0f, float hi = 1.0f, bool grad = true) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) {
    x = rng.uniform(lo, hi);
  }
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Values in +-[0.1, 1] so kinks (relu) stay out of reach of the probe step.
Tensor away_from_zero(Shape shape, Rng& rng) {
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) {
    const float m = rng.uniform(0.1f, 1.0f);
    x = rng.uniform() < 0.5 ? -m : m;
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

// Random linear read-out keeps |f| around 1 regardless of output size.
Tensor readout(const Tensor& y, Rng& rng) {
  const float s = 1.0f / std::sqrt(static_cast<float>(y.numel()));
  Tensor r = rand_tensor(y.shape(), rng, -s, s, false);
  return sum(mul(y, r));
}

int small(Rng& rng, int lo = 1, int hi = 8) { return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1))); }

// grad_check of f with respect to one argument while the others stay fixed.
double check(const std::function<Tensor(const Tensor&)>& op, const Tensor& x, std::uint64_t seed, float eps = 1e-2f) {
  auto f = [&](const Tensor& v) {
    Rng r(seed);
    return readout(op(v), r);
  };
  return grad_check(f, x, eps);
}

}  // namespace

TEST_CASE("matmul with the identity returns the other operand") {
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = Tensor::from({3, 2}, {1.5f, -2, 3, 4.25f, -5, 6});
  Tensor y = matmul(eye, a);
  CHECK(y.shape() == Shape{3, 2});
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(y.at(i) == a.at(i));
  }
}

TEST_CASE("softmax of equal logits is uniform") {
  Tensor y = softmax(Tensor::from({2}, {0, 0}));
  CHECK(y.at(0) == 0.5f);
  CHECK(y.at(1) == 0.5f);
}

TEST_CASE("softmax rows sum to one") {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = small(rng, 1, 64);
    Tensor x = rand_tensor({3, n}, rng, -20.0f, 20.0f, false);
    Tensor y = softmax(x);
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int j = 0; j < n; ++j) {
        s += y.at(static_cast<std::size_t>(r * n + j));
      }
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("masked key has no influence: matches attention with the key deleted") {
  Rng rng(3);
  const int B = 2, Sq = 3, Sk = 5, D = 8, H = 2;
  Tensor q = rand_tensor({B, Sq, D}, rng);
  Tensor k = rand_tensor({B, Sk, D}, rng);
  Tensor v = rand_tensor({B, Sk, D}, rng);
  const int drop = 2;
  std::vector<float> mask(B * Sk, 0.0f);
  for (int b = 0; b < B; ++b) {
    mask[static_cast<std::size_t>(b * Sk + drop)] = -std::numeric_limits<float>::infinity();
  }
  Tensor masked = attention(q, k, v, H, mask);

  // Brute force: rebuild k/v without row `drop`, plain per-head softmax attention in double.
  const int hd = D / H;
  for (int b = 0; b < B; ++b) {
    for (int h = 0; h < H; ++h) {
      for (int i = 0; i < Sq; ++i) {
        std::vector<double> w;
        std::vector<int> keys;
        for (int j = 0; j < Sk; ++j) {
          if (j == drop) {
            continue;
          }
          double s = 0;
          for (int d = 0; d < hd; ++d) {
            s += static_cast<double>(q.at(static_cast<std::size_t>((b * Sq + i) * D + h * hd + d))) *
                 k.at(static_cast<std::size_t>((b * Sk + j) * D + h * hd + d));
          }
          w.push_back(s / std::sqrt(static_cast<double>(hd)));
          keys.push_back(j);
        }
        double mx = *std::max_element(w.begin(), w.end());
        double z = 0;
        for (double& x : w) {
          x = std::exp(x - mx);
          z += x;
        }
        for (int d = 0; d < hd; ++d) {
          double o = 0;
          for (std::size_t n = 0; n < keys.size(); ++n) {
            o += w[n] / z * v.at(static_cast<std::size_t>((b * Sk + keys[n]) * D + h * hd + d));
          }
          CHECK(std::abs(o - masked.at(static_cast<std::size_t>((b * Sq + i) * D + h * hd + d))) < 1e-5);
        }
      }
    }
  }

  // Changing the masked value row leaves the output bit-identical.
  std::vector<float> vv(v.values().begin(), v.values().end());
  for (int d = 0; d < D; ++d) {
    vv[static_cast<std::size_t>(drop * D + d)] = 1e3f;
  }
  Tensor again = attention(q, k, Tensor::from(v.shape(), vv), H, mask);
  for (std::size_t i = 0; i < masked.numel(); ++i) {
    CHECK(again.at(i) == masked.at(i));
  }
}

TEST_CASE("backward basics") {
  SUBCASE("d(x*x)/dx at 3 is 6") {
    Tensor x = Tensor::scalar(3.0f, true);
    mul(x, x).backward();
    CHECK(x.grad()[0] == 6.0f);
  }
  SUBCASE("stop_gradient blocks the path") {
    Tensor x = Tensor::scalar(2.0f, true);
    Tensor y = Tensor::scalar(5.0f, true);
    mul(stop_gradient(x), y).backward();
    CHECK(x.grad()[0] == 0.0f);
    CHECK(y.grad()[0] == 2.0f);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::zeros({2}, true);
    CHECK_THROWS_AS(scale(x, 2.0f).backward(), mmm::Error);
  }
}

TEST_CASE("shape errors name the op and dimensions") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected an error");
  } catch (const mmm::Error& e) {
    CHECK(e.kind() == mmm::ErrorKind::shape);
    CHECK(e.where() == "matmul");
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[4,5]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, b), mmm::Error);
  CHECK_THROWS_AS(conv1d(Tensor::zeros({1, 4, 3}), Tensor::zeros({3, 2, 1}), Tensor(), 1, 1, 1), mmm::Error);
}

TEST_CASE("MLP loss gradient matches central differences") {
  Rng rng(5);
  ParamSet ps;
  Linear l1 = Linear::make(ps, "l1", 6, 8, rng);
  Linear l2 = Linear::make(ps, "l2", 8, 3, rng);
  Tensor x = rand_tensor({4, 6}, rng, -1, 1, false);
  Tensor target = rand_tensor({4, 3}, rng, -1, 1, false);
  auto loss_with = [&](const std::string& which) {
    return [&, which](const Tensor& p) {
      Linear a = l1;
      Linear b = l2;
      if (which == "l1.w") a.w = p;
      if (which == "l1.b") a.b = p;
      if (which == "l2.w") b.w = p;
      if (which == "l2.b") b.b = p;
      return mse(b(gelu(a(x))), target);
    };
  };
  for (const auto& [name, t] : ps.items()) {
    CAPTURE(name);
    CHECK(grad_check(loss_with(name), t, 1e-3f) < 1e-3);
  }
}

TEST_CASE("grad_check behaviour") {
  Rng rng(9);
  Tensor x = rand_tensor({3, 4}, rng);
  CHECK(grad_check([](const Tensor& v) { return sum(v); }, x, 1e-2f) < 1e-5);
  Tensor g = Tensor::full({4}, 1.0f);
  Tensor b = Tensor::zeros({4});
  CHECK(grad_check([&](const Tensor& v) { return sum(layer_norm(v, g, b)); }, x, 1e-2f) < 1e-3);

  // f(x) = sum(x * sg(x)): the sg argument must stay fixed in the numeric probe.
  auto f = [](const Tensor& v) { return sum(mul(v, stop_gradient(v))); };
  CHECK(grad_check(f, x, 1e-2f) < 1e-4);

  auto bad = [](const Tensor& v) { return scale(sum(v), std::numeric_limits<float>::infinity()); };
  CHECK_THROWS_AS(grad_check(bad, x, 1e-2f), mmm::Error);
  CHECK_THROWS_AS(grad_check(f, x, 0.0f), mmm::Error);
}

TEST_CASE("every op passes grad_check over 100 seeds") {
  double worst = 0.0;
  auto note = [&](const std::string& op, double err) {
    CAPTURE(op);
    CHECK(err < 1e-3);
    worst = std::max(worst, err);
  };
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    const std::uint64_t rs = seed * 7919 + 1;
    const int n = small(rng), m = small(rng), k = small(rng);

    Tensor a = rand_tensor({n, k}, rng);
    Tensor w = rand_tensor({k, m}, rng);
    Tensor bias = rand_tensor({m}, rng);
    note("matmul/a", check([&](const Tensor& v) { return matmul(v, w); }, a, rs));
    note("matmul/b", check([&](const Tensor& v) { return matmul(a, v); }, w, rs));
    note("linear/x", check([&](const Tensor& v) { return linear(v, w, bias); }, a, rs));
    note("linear/w", check([&](const Tensor& v) { return linear(a, v, bias); }, w, rs));
    note("linear/b", check([&](const Tensor& v) { return linear(a, w, v); }, bias, rs));

    Tensor p = rand_tensor({n, m}, rng);
    Tensor q = rand_tensor({n, m}, rng);
    Tensor row = rand_tensor({m}, rng);
    note("add/a", check([&](const Tensor& v) { return add(v, q); }, p, rs));
    note("add/bcast", check([&](const Tensor& v) { return add(p, v); }, row, rs));
    note("sub/b", check([&](const Tensor& v) { return sub(p, v); }, q, rs));
    note("sub/bcast", check([&](const Tensor& v) { return sub(p, v); }, row, rs));
    note("mul/a", check([&](const Tensor& v) { return mul(v, q); }, p, rs));
    note("mul/bcast", check([&](const Tensor& v) { return mul(p, v); }, row, rs));
    note("scale", check([&](const Tensor& v) { return scale(v, -1.7f); }, p, rs));
    note("relu", check([&](const Tensor& v) { return relu(v); }, away_from_zero({n, m}, rng), rs));
    note("gelu", check([&](const Tensor& v) { return gelu(v); }, rand_tensor({n, m}, rng, -3, 3), rs));
    note("softmax", check([&](const Tensor& v) { return softmax(v); }, rand_tensor({n, m}, rng, -2, 2), rs));

    // Rows are spread-out grids plus jitter: near-constant rows make the
    // normalisation ill-conditioned and the central difference meaningless.
    Tensor lx = rand_tensor({n, m + 1}, rng, -0.1f, 0.1f);
    for (int r = 0; r < n; ++r) {
      for (int j = 0; j <= m; ++j) {
        const int slot = (j + r) % (m + 1);
        lx.mutable_values()[static_cast<std::size_t>(r * (m + 1) + j)] += static_cast<float>(slot) * 0.5f;
      }
    }
    Tensor lg = rand_tensor({m + 1}, rng, 0.5f, 1.5f);
    Tensor lb = rand_tensor({m + 1}, rng);
    note("layer_norm/x", check([&](const Tensor& v) { return layer_norm(v, lg, lb); }, lx, rs));
    note("layer_norm/g", check([&](const Tensor& v) { return layer_norm(lx, v, lb); }, lg, rs));
    note("layer_norm/b", check([&](const Tensor& v) { return layer_norm(lx, lg, v); }, lb, rs));

    std::vector<int> ids(static_cast<std::size_t>(n * 2));
    for (int& id : ids) {
      id = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    }
    note("embedding", check([&](const Tensor& v) { return embedding(v, ids, {n, 2}); }, rand_tensor({k, m}, rng), rs));

    const int B = small(rng, 1, 2), T = small(rng, 4, 8), ci = small(rng, 1, 4), co = small(rng, 1, 4);
    const int ks = small(rng, 1, 4), stride = small(rng, 1, 2);
    const int pl = static_cast<int>(rng.below(3)), pr = static_cast<int>(rng.below(3));
    Tensor cx = rand_tensor({B, T, ci}, rng);
    Tensor cw = rand_tensor({ks, ci, co}, rng);
    Tensor cb = rand_tensor({co}, rng);
    note("conv1d/x", check([&](const Tensor& v) { return conv1d(v, cw, cb, stride, pl, pr); }, cx, rs));
    note("conv1d/w", check([&](const Tensor& v) { return conv1d(cx, v, cb, stride, pl, pr); }, cw, rs));
    note("conv1d/b", check([&](const Tensor& v) { return conv1d(cx, cw, v, stride, pl, pr); }, cb, rs));
    Tensor tw = rand_tensor({4, ci, co}, rng);
    note("conv_t/x", check([&](const Tensor& v) { return conv_transpose1d(v, tw, cb, 2, 1); }, cx, rs));
    note("conv_t/w", check([&](const Tensor& v) { return conv_transpose1d(cx, v, cb, 2, 1); }, tw, rs));
    note("conv_t/b", check([&](const Tensor& v) { return conv_transpose1d(cx, tw, v, 2, 1); }, cb, rs));

    const int H = small(rng, 1, 2), hd = small(rng, 1, 4), Sq = small(rng, 1, 5), Sk = small(rng, 2, 6);
    Tensor aq = rand_tensor({B, Sq, H * hd}, rng);
    Tensor ak = rand_tensor({B, Sk, H * hd}, rng);
    Tensor av = rand_tensor({B, Sk, H * hd}, rng);
    std::vector<float> amask(static_cast<std::size_t>(B * Sq * Sk), 0.0f);
    for (int b = 0; b < B; ++b) {
      for (int i = 0; i < Sq; ++i) {
        // mask one random key per query row, keeping key 0 visible
        const int j = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(Sk - 1)));
        amask[static_cast<std::size_t>((b * Sq + i) * Sk + j)] = -std::numeric_limits<float>::infinity();
      }
    }
    note("attention/q", check([&](const Tensor& v) { return attention(v, ak, av, H, amask); }, aq, rs));
    note("attention/k", check([&](const Tensor& v) { return attention(aq, v, av, H, amask); }, ak, rs));
    note("attention/v", check([&](const Tensor& v) { return attention(aq, ak, v, H, amask); }, av, rs));

    std::vector<int> targets(static_cast<std::size_t>(n));
    for (int& t : targets) {
      t = static_cast<int>(rng.below(static_cast<std::uint64_t>(m + 1))) - 1;
    }
    targets[0] = m - 1;
    note("cross_entropy",
         grad_check([&](const Tensor& v) { return cross_entropy(v, targets); }, rand_tensor({n, m}, rng, -2, 2), 1e-2f));

    note("sum", grad_check([](const Tensor& v) { return sum(v); }, p, 1e-2f));
    note("mean", grad_check([](const Tensor& v) { return mean(v); }, p, 1e-2f));
    note("mse/a", grad_check([&](const Tensor& v) { return mse(v, q); }, p, 1e-2f));
    note("mse/b", grad_check([&](const Tensor& v) { return mse(p, v); }, q, 1e-2f));
    const int start = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    note("narrow", check([&](const Tensor& v) { return narrow(v, 1, start, m - start); }, p, rs));
    note("narrow/0", check([&](const Tensor& v) { return narrow(v, 0, 0, 1); }, p, rs));
    note("concat/a", check([&](const Tensor& v) { return concat_last(v, q); }, p, rs));
    note("concat/b", check([&](const Tensor& v) { return concat_last(p, v); }, q, rs));
    note("reshape", check([&](const Tensor& v) { return reshape(v, {m, n}); }, p, rs));
    note("time_mean", check([&](const Tensor& v) { return time_mean(v); }, cx, rs));
    note("dropout", check(
                        [&](const Tensor& v) {
                          Rng dr(rs);
                          return dropout(v, 0.3f, dr);
                        },
                        p, rs));
    note("stop_gradient", check([&](const Tensor& v) { return add(v, stop_gradient(v)); }, p, rs));
  }
  MESSAGE("worst relative error " << worst);
}

TEST_CASE("Rng stream is fixed") {
  std::uint64_t s = 0;
  CHECK(splitmix64(s) == 0xe220a8397b1dcdafull);
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    CHECK(c.below(7) < 7u);
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("Adam minimises a quadratic") {
  ParamSet ps;
  Tensor x = ps.add("x", Tensor::from({3}, {3.0f, -2.0f, 1.0f}, true));
  Adam opt(ps, AdamConfig{.lr = 0.1f});
  for (int i = 0; i < 300; ++i) {
    ps.zero_grad();
    sum(mul(x, x)).backward();
    opt.step();
  }
  for (float v : x.values()) {
    CHECK(std::abs(v) < 0.05f);
  }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
  Rng rng(1);
  ParamSet ps;
  ps.add("a", init_normal({3, 4}, 1.0f, rng));
  ps.add("b.c", Tensor::from({2}, {std::numeric_limits<float>::denorm_min(), -0.0f}));
  const auto path = std::filesystem::temp_directory_path() / "mmm_ckpt_test.bin";
  save_checkpoint(path, "MMMVQ1", {{"K", 3}}, ps);
  Checkpoint ck = load_checkpoint(path, "MMMVQ1");
  CHECK(ck.config["K"] == 3);
  ParamSet other;
  other.add("b.c", Tensor::zeros({2}));
  other.add("a", Tensor::zeros({3, 4}));
  restore(other, ck);
  CHECK(hash_values(ps) != hash_values(other));  // order differs
  for (const auto& [name, t] : ps.items()) {
    const Tensor& u = other.get(name);
    for (std::size_t i = 0; i < t.numel(); ++i) {
      CHECK(std::bit_cast<std::uint32_t>(t.at(i)) == std::bit_cast<std::uint32_t>(u.at(i)));
    }
  }
  CHECK_THROWS_AS(load_checkpoint(path, "MMMTF1"), mmm::Error);
  std::filesystem::remove(path);
}
