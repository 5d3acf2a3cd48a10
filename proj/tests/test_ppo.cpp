#include "helpers.hpp"
#include "oracles.hpp"

#include "ipp3d/config.hpp"
#include "ipp3d/ppo.hpp"
#include "ipp3d/train.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ipp3d;
using namespace testing_helpers;

namespace {

nn::PolicyConfig small_arch() {
  nn::PolicyConfig a;
  a.hidden = 8;
  a.heads = 2;
  a.ff_width = 16;
  return a;
}

RunConfig tiny_run(long interactions) {
  RunConfig cfg;
  cfg.policy = small_arch();
  cfg.train.n_envs = 2;
  cfg.train.epochs = 2;
  cfg.train.budget_min = 1.0;
  cfg.train.budget_max = 1.5;
  cfg.train.total_interactions = interactions;
  cfg.train.checkpoint_every = 1;
  cfg.graph.positions = 5;
  return cfg;
}

RolloutBuffer small_buffer(const nn::PolicyParams<double>& p, std::uint64_t seed = 3) {
  const auto cfg = tiny_run(0);
  return collect_rollouts(p, cfg.train, cfg.env(), cfg.train_world(), seed, 0);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::filesystem::path fresh_dir(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / name;
  std::filesystem::remove_all(d);
  return d;
}

}  // namespace

TEST(Gae, OneStepLimit) {
  const std::vector<double> r{1.0, 0.5, -0.2, 2.0}, v{0.3, 0.1, 0.4, -0.5};
  const std::vector<std::uint8_t> d{0, 0, 1, 1};
  const auto a = gae(r, v, d, 0.0, 0.7);
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(a[i], r[i] - v[i], 1e-15);
}

TEST(Gae, MonteCarloLimitIsSuffixSum) {
  const std::vector<double> r{1.0, 2.0, 3.0, 4.0}, v(4, 0.0);
  const std::vector<std::uint8_t> d{0, 0, 0, 1};
  const auto a = gae(r, v, d, 1.0, 1.0);
  EXPECT_EQ(a, (std::vector<double>{10.0, 9.0, 7.0, 4.0}));
}

TEST(Gae, MatchesDoubleLoopOracle) {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 10 + static_cast<int>(uniform_index(rng, 20));
    std::vector<double> r(n), v(n);
    std::vector<std::uint8_t> d(n, 0);
    for (int i = 0; i < n; ++i) {
      r[i] = uniform(rng, -1, 1);
      v[i] = uniform(rng, -1, 1);
      d[i] = uniform(rng, 0, 1) < 0.15 ? 1 : 0;
    }
    d[n - 1] = 1;
    const double g = uniform(rng, 0.5, 1.0), l = uniform(rng, 0.5, 1.0);
    const auto got = gae(r, v, d, g, l);
    const auto want = oracle::gae(r, v, d, g, l);
    for (int i = 0; i < n; ++i) ASSERT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Gae, NormalizedAdvantagesHaveZeroMeanUnitVariance) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 1);
  const auto buf = small_buffer(p);
  const auto adv = advantages(buf, 0.99, 0.95);
  const double n = static_cast<double>(adv.advantages.size());
  double m = 0, s = 0;
  for (double a : adv.advantages) m += a;
  m /= n;
  for (double a : adv.advantages) s += (a - m) * (a - m);
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(s / n, 1.0, 1e-6);
}

TEST(Rollouts, EpisodesCompleteAndWithinCaps) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 2);
  const auto buf = small_buffer(p);
  ASSERT_EQ(buf.episodes.size(), 2u);
  ASSERT_TRUE(buf.steps.back().done);
  std::size_t k = 0;
  for (const auto& e : buf.episodes) {
    EXPECT_GE(e.steps, 1);
    EXPECT_LE(e.steps, 256);
    double cost = 0;
    for (int i = 0; i < e.steps; ++i, ++k) {
      const auto& s = buf.steps[k];
      cost += s.input.costs(s.action);
      EXPECT_LE(s.input.costs(s.action), s.input.budget_remaining);
      EXPECT_EQ(s.done, i + 1 == e.steps);
    }
    EXPECT_LE(cost, e.budget + 1e-9);
  }
  EXPECT_EQ(k, buf.size());
}

TEST(Rollouts, BudgetBarelyAboveYawCostStillRecordsAStep) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 2);
  const auto cfg = tiny_run(0);
  const auto w = grid_world(5);
  const auto buf = collect_episode(p, w, 0.11, cfg.env(), 9);
  EXPECT_GE(buf.size(), 1u);
}

TEST(Rollouts, StoredLogProbsReplayExactly) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 3);
  const auto buf = small_buffer(p);
  for (const auto& s : buf.steps) {
    nn::NoGradGuard ng;
    const auto out = nn::forward(p, s.input);
    EXPECT_NEAR(out.log_probs.value().data[s.action], s.log_prob, 1e-10);
    EXPECT_NEAR(out.value.item(), s.value, 1e-10);
  }
}

TEST(Rollouts, IdenticalSeedsGiveIdenticalBuffers) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 4);
  const auto a = small_buffer(p, 11), b = small_buffer(p, 11);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.steps[i].action, b.steps[i].action);
    EXPECT_EQ(a.steps[i].reward, b.steps[i].reward);
    EXPECT_EQ(a.steps[i].input.features, b.steps[i].input.features);
  }
  const auto cfg = tiny_run(0);
  const auto c = collect_rollouts(p, cfg.train, cfg.env(), cfg.train_world(), 11, 0, 2);
  ASSERT_EQ(c.size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.steps[i].log_prob, c.steps[i].log_prob);
}

TEST(Update, RatioOneSurrogateIsMinusAdvantage) {
  const auto p = nn::PolicyParams<double>::init(small_arch(), 5);
  const auto buf = small_buffer(p);
  const auto adv = advantages(buf, 0.99, 0.95);
  TrainConfig cfg;
  double sum = 0;
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const auto l = sample_loss(p, buf.steps[i], adv.advantages[i], adv.returns[i], cfg);
    EXPECT_NEAR(l.policy, -adv.advantages[i], 1e-10);
    EXPECT_FALSE(l.clipped);
    sum += l.policy;
  }
  EXPECT_NEAR(sum / static_cast<double>(buf.size()), 0.0, 1e-9);
}

TEST(Update, ZeroClipGivesZeroPolicyGradient) {
  auto p = nn::PolicyParams<double>::init(small_arch(), 6);
  const auto buf = small_buffer(p);
  TrainConfig cfg;
  cfg.clip = 0.0;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  p.zero_grad();
  for (const auto& s : buf.steps) nn::backward(sample_loss(p, s, 1.3, 0.0, cfg).total);
  for (const auto& [name, v] : p.entries())
    for (double g : v.grad().data) ASSERT_EQ(g, 0.0) << name;
}

TEST(Update, SurrogateBoundedByUnclippedAndClippedTerms) {
  Rng rng(7);
  auto p = nn::PolicyParams<double>::init(small_arch(), 7);
  const auto buf = small_buffer(p);
  auto q = nn::PolicyParams<double>::init(small_arch(), 8);
  TrainConfig cfg;
  for (const auto& s : buf.steps) {
    const double a = uniform(rng, -2, 2);
    nn::NoGradGuard ng;
    const auto l = sample_loss(q, s, a, 0.0, cfg);
    const double rho = std::exp(l.log_ratio);
    const double surr = -l.policy;
    EXPECT_LE(surr, rho * a + 1e-12);
    EXPECT_LE(surr, std::clamp(rho, 0.8, 1.2) * a + 1e-12);
  }
}

TEST(Update, PositiveAdvantageActionsGainProbability) {
  auto p = nn::PolicyParams<double>::init(small_arch(), 9);
  const auto buf = small_buffer(p);
  const auto adv = advantages(buf, 0.99, 0.95);
  auto mean_pos_logp = [&](const nn::PolicyParams<double>& params) {
    nn::NoGradGuard ng;
    double s = 0;
    int n = 0;
    for (std::size_t i = 0; i < buf.size(); ++i) {
      if (adv.advantages[i] <= 0) continue;
      s += nn::forward(params, buf.steps[i].input).log_probs.value().data[buf.steps[i].action];
      ++n;
    }
    return s / n;
  };
  const double before = mean_pos_logp(p);
  TrainConfig cfg;
  cfg.value_coef = 0.0;
  cfg.entropy_coef = 0.0;
  cfg.epochs = 1;
  cfg.batch = static_cast<int>(buf.size());
  nn::Adam<double> opt(p, nn::AdamConfig{});
  Rng rng(1);
  const auto st = ppo_update(p, opt, buf, adv, cfg, rng);
  EXPECT_EQ(st.optimizer_steps, 1);
  EXPECT_GE(mean_pos_logp(p), before);
}

TEST(Update, OptimizerStepCountAndLearningRate) {
  auto p = nn::PolicyParams<double>::init(small_arch(), 10);
  const auto buf = small_buffer(p);
  const auto adv = advantages(buf, 0.99, 0.95);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch = 4;
  nn::Adam<double> opt(p, nn::AdamConfig{});
  Rng rng(2);
  const auto st = ppo_update(p, opt, buf, adv, cfg, rng);
  const long per_epoch = static_cast<long>((buf.size() + 3) / 4);
  EXPECT_EQ(st.optimizer_steps, 3 * per_epoch);
  EXPECT_DOUBLE_EQ(st.lr, 1e-4 * std::pow(0.96, (3 * per_epoch - 1) / 32));
  EXPECT_DOUBLE_EQ(opt.lr(), 1e-4 * std::pow(0.96, (3 * per_epoch) / 32));
}

TEST(Update, NonFiniteLossRestoresParameters) {
  auto p = nn::PolicyParams<double>::init(small_arch(), 11);
  const auto before = p.clone();
  const auto buf = small_buffer(p);
  auto adv = advantages(buf, 0.99, 0.95);
  adv.returns[adv.returns.size() / 2] = std::numeric_limits<double>::quiet_NaN();
  nn::Adam<double> opt(p, nn::AdamConfig{});
  Rng rng(3);
  EXPECT_THROW(ppo_update(p, opt, buf, adv, TrainConfig{}, rng), NonFiniteLoss);
  EXPECT_EQ(opt.steps(), 0);
  for (std::size_t k = 0; k < p.count(); ++k)
    EXPECT_EQ(p.entries()[k].second.value(), before.entries()[k].second.value());
}

TEST(Train, ZeroInteractionsWritesOnlyInitialCheckpoint) {
  const auto dir = fresh_dir("ipp3d_train_zero");
  const auto s = train(tiny_run(0), dir);
  EXPECT_EQ(s.iteration, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "policy.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / "ckpt_000000.bin"));
  EXPECT_TRUE(std::filesystem::exists(dir / "checkpoints" / "ckpt_000000.adam.bin"));
  EXPECT_EQ(read_file(dir / "train_log.csv"), std::string(kTrainLogHeader) + "\n");
}

TEST(Train, SameSeedGivesIdenticalLogsAndParameters) {
  const auto a = fresh_dir("ipp3d_train_a"), b = fresh_dir("ipp3d_train_b");
  train(tiny_run(60), a);
  TrainOptions two;
  two.jobs = 2;
  train(tiny_run(60), b, two);
  EXPECT_EQ(read_file(a / "train_log.csv"), read_file(b / "train_log.csv"));
  EXPECT_EQ(read_file(a / "policy.bin"), read_file(b / "policy.bin"));
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto a = fresh_dir("ipp3d_resume_a"), b = fresh_dir("ipp3d_resume_b");
  const auto full = train(tiny_run(80), a);
  const auto part = train(tiny_run(30), b);
  ASSERT_LT(part.interactions, full.interactions);
  TrainOptions opts;
  opts.resume = true;
  const auto resumed = train(tiny_run(80), b, opts);
  EXPECT_EQ(resumed.iteration, full.iteration);
  EXPECT_EQ(read_file(a / "train_log.csv"), read_file(b / "train_log.csv"));
  EXPECT_EQ(read_file(a / "policy.bin"), read_file(b / "policy.bin"));
}

TEST(Train, ResumeWithoutCheckpointIsIoError) {
  TrainOptions opts;
  opts.resume = true;
  EXPECT_THROW(train(tiny_run(10), fresh_dir("ipp3d_resume_none"), opts), IoError);
}

TEST(Train, LogHasOneRowPerIteration) {
  const auto dir = fresh_dir("ipp3d_train_log");
  const auto s = train(tiny_run(40), dir);
  std::istringstream in(read_file(dir / "train_log.csv"));
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kTrainLogHeader);
  long rows = 0, last = 0;
  while (std::getline(in, line)) {
    ++rows;
    last = std::stol(line.substr(0, line.find(',')));
  }
  EXPECT_EQ(rows, s.iteration);
  EXPECT_EQ(last, s.interactions);
  EXPECT_GE(s.interactions, 40);
}
