#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "oasr/model.hpp"
#include "oasr/optim.hpp"
#include "gradcheck.hpp"
#include "test_util.hpp"

using namespace oasr;
using namespace oasr::testing;

namespace {

NetworkConfig tiny(int n = 2, int c = 8, int s = 4) {
  NetworkConfig cfg;
  cfg.oam_count = n;
  cfg.width = c;
  cfg.ca_reduction = s;
  return cfg;
}

// Straight transcription of the network equations in double precision, built
// only from loops and the direct convolution oracle.
class EquationOracle {
 public:
  explicit EquationOracle(const ParameterSet<float>& params) {
    for (const auto& p : params) p_.emplace(p.name, p.value.cast<double>());
  }

  Tensor<double> forward(const Tensor<double>& x, int blocks, int r) const {
    const auto f0 = conv(x, "entry.conv3x3");
    std::vector<Tensor<double>> stages;
    Tensor<double> f = f0;
    for (int i = 0; i < blocks; ++i) {
      const std::string b = "oam." + std::to_string(i);
      const auto cat = concat({conv(f, b + ".conv5x1"), conv(f, b + ".conv1x5"), conv(f, b + ".conv3x3")});
      const auto fused = conv(relu(scale(cat, gate(cat, b + ".lca"))), b + ".fuse");
      f = sum(f, fused);
      stages.push_back(f);
    }
    const auto g = concat(stages);
    const auto fg = conv(relu(scale(g, gate(g, "gca"))), "gca.compress");
    const auto head = conv(conv(sum(f0, fg), "tail.conv1"), "tail.conv2");
    const Shape& s = head.shape();
    Tensor<double> out(Shape{s.n(), 1, s.h() * r, s.w() * r});
    for (std::size_t n = 0; n < s.n(); ++n)
      for (std::size_t y = 0; y < s.h(); ++y)
        for (std::size_t xx = 0; xx < s.w(); ++xx)
          for (int dy = 0; dy < r; ++dy)
            for (int dx = 0; dx < r; ++dx) out.at(n, 0, y * r + dy, xx * r + dx) = head.at(n, dy * r + dx, y, xx);
    return out;
  }

 private:
  Tensor<double> conv(const Tensor<double>& x, const std::string& name) const {
    return direct_conv2d(x, p_.at(name + ".weight"), p_.at(name + ".bias"));
  }

  static Tensor<double> relu(Tensor<double> x) {
    for (auto& v : x.data()) v = v > 0 ? v : 0;
    return x;
  }

  static Tensor<double> sum(const Tensor<double>& a, const Tensor<double>& b) {
    Tensor<double> out = a;
    for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
    return out;
  }

  static Tensor<double> concat(const std::vector<Tensor<double>>& parts) {
    const Shape& s = parts[0].shape();
    std::size_t c = 0;
    for (const auto& p : parts) c += p.shape().c();
    Tensor<double> out(Shape{s.n(), c, s.h(), s.w()});
    for (std::size_t n = 0; n < s.n(); ++n) {
      std::size_t base = 0;
      for (const auto& p : parts) {
        for (std::size_t k = 0; k < p.shape().c(); ++k)
          for (std::size_t y = 0; y < s.h(); ++y)
            for (std::size_t x = 0; x < s.w(); ++x) out.at(n, base + k, y, x) = p.at(n, k, y, x);
        base += p.shape().c();
      }
    }
    return out;
  }

  // One alpha row per sample: sigmoid(W2 relu(W1 mean(F) + b1) + b2).
  Tensor<double> gate(const Tensor<double>& f, const std::string& prefix) const {
    const Shape& s = f.shape();
    const auto& w1 = p_.at(prefix + ".fc1.weight");
    const auto& b1 = p_.at(prefix + ".fc1.bias");
    const auto& w2 = p_.at(prefix + ".fc2.weight");
    const auto& b2 = p_.at(prefix + ".fc2.bias");
    const std::size_t hidden = w1.shape()[0];
    Tensor<double> alpha(Shape{s.n(), s.c()});
    for (std::size_t n = 0; n < s.n(); ++n) {
      std::vector<double> z(s.c()), h(hidden);
      for (std::size_t c = 0; c < s.c(); ++c) {
        for (std::size_t y = 0; y < s.h(); ++y)
          for (std::size_t x = 0; x < s.w(); ++x) z[c] += f.at(n, c, y, x);
        z[c] /= static_cast<double>(s.h() * s.w());
      }
      for (std::size_t j = 0; j < hidden; ++j) {
        double a = b1[j];
        for (std::size_t c = 0; c < s.c(); ++c) a += w1.at(j, c) * z[c];
        h[j] = a > 0 ? a : 0;
      }
      for (std::size_t c = 0; c < s.c(); ++c) {
        double a = b2[c];
        for (std::size_t j = 0; j < hidden; ++j) a += w2.at(c, j) * h[j];
        alpha.at(n, c) = 1.0 / (1.0 + std::exp(-a));
      }
    }
    return alpha;
  }

  static Tensor<double> scale(Tensor<double> f, const Tensor<double>& alpha) {
    const Shape& s = f.shape();
    for (std::size_t n = 0; n < s.n(); ++n)
      for (std::size_t c = 0; c < s.c(); ++c)
        for (std::size_t y = 0; y < s.h(); ++y)
          for (std::size_t x = 0; x < s.w(); ++x) f.at(n, c, y, x) *= alpha.at(n, c);
    return f;
  }

  std::map<std::string, Tensor<double>> p_;
};

void zero_where(ParameterSet<float>& params, const std::function<bool(const std::string&)>& pred) {
  for (auto& p : params)
    if (pred(p.name)) p.value.fill(0);
}

bool starts_with(const std::string& s, const std::string& prefix) { return s.rfind(prefix, 0) == 0; }

std::vector<NetworkConfig> all_variants(NetworkConfig base) {
  std::vector<NetworkConfig> out;
  for (auto d : kAllBlockDesigns)
    for (auto f : kAllFusionModes)
      for (auto pl : kAllPlacements) {
        base.block_design = d;
        base.fusion_mode = f;
        base.ca_placement = pl;
        out.push_back(base);
      }
  return out;
}

}  // namespace

TEST(CaGate, ZeroWeightsGiveOneHalf) {
  std::mt19937_64 rng(1);
  ParameterSet<float> p;
  p.add("g.fc1.weight", Tensor<float>(Shape{2, 8}));
  p.add("g.fc1.bias", Tensor<float>(Shape{2}));
  p.add("g.fc2.weight", Tensor<float>(Shape{8, 2}));
  p.add("g.fc2.bias", Tensor<float>(Shape{8}));
  Eager<float> ex;
  Bound<Eager<float>> b(ex, p);
  const auto alpha = ca_gate(ex, b, "g", ex.input(random_tensor<float>(Shape{3, 8, 4, 4}, rng)));
  EXPECT_EQ(alpha->shape(), (Shape{3, 8}));
  for (float v : alpha->data()) EXPECT_EQ(v, 0.5f);
}

TEST(CaGate, RandomGatesStrictlyInsideUnitInterval) {
  for (int seed = 0; seed < 10; ++seed) {
    auto cfg = tiny();
    const auto params = init_weights(cfg, seed);
    std::mt19937_64 rng(seed);
    GateTrace<float> trace;
    infer(cfg, params, random_tensor<float>(Shape{2, 1, 8, 8}, rng, 0, 255), &trace);
    ASSERT_EQ(trace.alphas.size(), 3u);  // two local gates and the global gate
    for (const auto& a : trace.alphas)
      for (float v : a.data()) {
        EXPECT_GT(v, 0.f);
        EXPECT_LT(v, 1.f);
      }
  }
}

TEST(Oam, ZeroBranchIsIdentityForEveryVariant) {
  std::mt19937_64 rng(2);
  for (const auto& cfg : all_variants(tiny(1, 8, 4))) {
    auto params = init_weights(cfg, 3);
    zero_where(params, [](const std::string& n) {
      return starts_with(n, "oam.0.") && n.find(".lca.") == std::string::npos;
    });
    Eager<float> ex;
    Bound<Eager<float>> b(ex, params);
    const auto x = random_tensor<float>(Shape{2, 8, 6, 7}, rng);
    const auto y = oam_forward(ex, cfg, b, 0, ex.input(x));
    EXPECT_EQ(y->vec(), x.vec()) << to_string(cfg.block_design) << "/" << to_string(cfg.fusion_mode) << "/"
                                 << to_string(cfg.ca_placement);
  }
}

TEST(Oam, PreservesShapeAndRejectsWrongWidth) {
  std::mt19937_64 rng(4);
  for (const auto& cfg : all_variants(tiny(1, 8, 4))) {
    const auto params = init_weights(cfg, 1);
    Eager<float> ex;
    Bound<Eager<float>> b(ex, params);
    const auto x = random_tensor<float>(Shape{1, 8, 5, 9}, rng);
    EXPECT_EQ(oam_forward(ex, cfg, b, 0, ex.input(x))->shape(), x.shape());
    EXPECT_THROW(oam_forward(ex, cfg, b, 0, ex.input(Tensor<float>(Shape{1, 4, 5, 9}))), std::invalid_argument);
  }
}

TEST(Network, OutputShapeAndZeroHead) {
  std::mt19937_64 rng(5);
  for (int r = 2; r <= 4; ++r) {
    auto cfg = tiny();
    cfg.scale = r;
    auto params = init_weights(cfg, 1);
    const auto y = infer(cfg, params, random_tensor<float>(Shape{1, 1, 7, 9}, rng, 0, 255));
    EXPECT_EQ(y.shape(), (Shape{1, 1, 7u * r, 9u * r}));
    for (auto& p : params) p.value.fill(0);
    const auto z = infer(cfg, params, random_tensor<float>(Shape{1, 1, 7, 9}, rng, 0, 255));
    for (float v : z.data()) EXPECT_EQ(v, 0.f);
  }
  auto cfg = tiny();
  EXPECT_THROW(infer(cfg, init_weights(cfg, 1), Tensor<float>(Shape{1, 1, 4, 8})), std::invalid_argument);
  EXPECT_THROW(infer(cfg, init_weights(cfg, 1), Tensor<float>(Shape{1, 3, 8, 8})), std::invalid_argument);
}

TEST(Network, ZeroBranchesReduceToHeadOfEntryFeatures) {
  std::mt19937_64 rng(6);
  for (const auto& cfg : all_variants(tiny(2, 8, 4))) {
    auto params = init_weights(cfg, 9);
    zero_where(params, [](const std::string& n) {
      return (starts_with(n, "oam.") && n.find(".lca.") == std::string::npos) || starts_with(n, "gca.compress");
    });
    const auto x = random_tensor<float>(Shape{1, 1, 8, 8}, rng, 0, 255);
    const auto y = infer(cfg, params, x);

    Eager<float> ex;
    Bound<Eager<float>> b(ex, params);
    auto f0 = conv(ex, b, "entry.conv3x3", ex.input(x));
    auto head = ex.pixel_shuffle(conv(ex, b, "tail.conv2", conv(ex, b, "tail.conv1", f0)), 2);
    EXPECT_EQ(y.vec(), head->vec());
  }
}

TEST(Network, MatchesEquationTranscription) {
  auto cfg = tiny(2, 8, 4);
  const auto params = init_weights(cfg, 42);
  std::mt19937_64 rng(42);
  const auto x = random_tensor<float>(Shape{2, 1, 12, 12}, rng, 0, 1);
  const auto fast = infer(cfg, params, x);
  const auto slow = EquationOracle(params).forward(x.cast<double>(), 2, 2);
  ASSERT_EQ(fast.shape(), (Shape{2, 1, 24, 24}));
  double worst = 0;
  for (std::size_t i = 0; i < fast.size(); ++i) worst = std::max(worst, std::abs(fast[i] - slow[i]));
  EXPECT_LE(worst, 1e-4);
}

TEST(Network, GradientsMatchFiniteDifferences) {
  // Every parameter of an N=2, C=8, s=4 network on an 8x8 input; the gate
  // placement rotates with the seed.
  // The acceptance suite repeats this over 20 seeds.
  for (int seed = 0; seed < 6; ++seed) {
    const auto res = check_network_gradients(gradcheck_config(seed), seed);
    EXPECT_LE(res.rel_error, 1e-3) << "seed " << seed;
  }
}

TEST(Network, AllVariantsRunForwardAndBackward) {
  std::mt19937_64 rng(7);
  for (const auto& cfg : all_variants(tiny(2, 8, 4))) {
    auto params = init_weights(cfg, 5);
    GradTape<float> tape;
    Bound<GradTape<float>> bound(tape, params, &params);
    GateTrace<float> trace;
    Var out = network_forward(tape, cfg, bound, tape.input(random_tensor<float>(Shape{2, 1, 6, 6}, rng, 0, 255)), &trace);
    ASSERT_EQ(tape.value(out).shape(), (Shape{2, 1, 12, 12}));
    tape.backward(out, random_tensor<float>(tape.value(out).shape(), rng));
    const std::size_t gates = (cfg.local_gate() ? 2 : 0) + (cfg.global_gate() ? 1 : 0);
    EXPECT_EQ(trace.alphas.size(), gates);
    for (const auto& p : params) {
      EXPECT_EQ(p.grad.shape(), p.value.shape()) << p.name;
      EXPECT_TRUE(p.grad.all_finite()) << p.name;
    }
    // Gradient reaches the first layer.
    const auto& g = params.at("entry.conv3x3.weight").grad;
    EXPECT_GT(std::abs(g.sum()) + std::abs(g[0]), 0.f);
  }
}

TEST(Layout, DirectionalWeightCounts) {
  NetworkConfig c;  // C = 64
  EXPECT_EQ(block_branch_weight_count(c), 77824u);
  NetworkConfig b = c;
  b.block_design = BlockDesign::kTriple3x3;
  EXPECT_EQ(block_branch_weight_count(b), 110592u);
  EXPECT_LT(block_branch_weight_count(c), block_branch_weight_count(b));
  EXPECT_LT(param_count(c), param_count(b));
  for (int w : {8, 16, 32}) {
    c.width = b.width = w;
    c.ca_reduction = b.ca_reduction = 8;
    EXPECT_EQ(block_branch_weight_count(c), 19u * w * w);
    EXPECT_EQ(block_branch_weight_count(b), 27u * w * w);
  }
}

TEST(Layout, BlockParametersScaleLinearlyWithDepth) {
  for (const auto& cfg : all_variants(tiny(2, 8, 4))) {
    auto count_oam = [](const NetworkConfig& c) {
      std::size_t n = 0;
      for (const auto& p : parameter_layout(c))
        if (starts_with(p.name, "oam.")) n += p.shape.numel();
      return n;
    };
    NetworkConfig deep = cfg;
    deep.oam_count = 4;
    EXPECT_EQ(count_oam(deep), 2 * count_oam(cfg));
  }
}

TEST(Layout, NamesAreUniqueAndCountsAgree) {
  for (const auto& cfg : all_variants(tiny(3, 8, 4))) {
    const auto params = init_weights(cfg, 0);
    EXPECT_EQ(params.scalar_count(), param_count(cfg));
    EXPECT_EQ(params.size(), parameter_layout(cfg).size());
  }
  NetworkConfig bad = tiny(2, 8, 16);  // 3C = 24 not divisible by 16
  EXPECT_THROW(parameter_layout(bad), std::invalid_argument);
}

TEST(Init, DeterministicZeroBiasHeNormal) {
  NetworkConfig cfg;
  const auto a = init_weights(cfg, 77), b = init_weights(cfg, 77), c = init_weights(cfg, 78);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].value.vec(), b[i].value.vec());
    if (a[i].value.vec() != c[i].value.vec()) differs = true;
  }
  EXPECT_TRUE(differs);
  for (const auto& spec : parameter_layout(cfg)) {
    const auto& t = a.at(spec.name).value;
    if (spec.fan_in == 0) {
      for (float v : t.data()) EXPECT_EQ(v, 0.f) << spec.name;
      continue;
    }
    if (t.size() < 2000) continue;
    double sq = 0;
    for (float v : t.data()) sq += static_cast<double>(v) * v;
    const double sd = std::sqrt(sq / static_cast<double>(t.size()));
    EXPECT_NEAR(sd, std::sqrt(2.0 / static_cast<double>(spec.fan_in)), 0.1 * std::sqrt(2.0 / spec.fan_in)) << spec.name;
  }
}

TEST(Transfer, ScaleTwoWarmStart) {
  auto src_cfg = tiny();
  const auto src = init_weights(src_cfg, 3);

  const auto same = load_from_scale2(src, src_cfg, src_cfg, 99);
  for (std::size_t i = 0; i < src.size(); ++i) EXPECT_EQ(same[i].value.vec(), src[i].value.vec());

  for (int r : {3, 4}) {
    auto dst_cfg = src_cfg;
    dst_cfg.scale = r;
    const auto dst = load_from_scale2(src, src_cfg, dst_cfg, 99);
    for (const auto& p : dst) {
      if (starts_with(p.name, "tail.conv2.")) {
        EXPECT_EQ(p.value.shape()[0], static_cast<std::size_t>(r * r));
        continue;
      }
      EXPECT_EQ(p.value.vec(), src.at(p.name).value.vec()) << p.name;
    }
  }
  auto deeper = src_cfg;
  deeper.oam_count = 3;
  EXPECT_THROW(load_from_scale2(src, src_cfg, deeper, 1), std::invalid_argument);
}
