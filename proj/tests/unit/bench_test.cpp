#include <gtest/gtest.h>

#include <boost/asio.hpp>
#include <random>
#include <sstream>

#include "aal/bench/harness.hpp"

using namespace aal;
using namespace aal::bench;

namespace {

LatencySample sample(int trial, double latency_ms) {
  return {trial, Kind::audio, seconds(1), seconds(1) + Nanos(static_cast<std::int64_t>(latency_ms * 1e6))};
}

std::vector<double> csv_latencies(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::vector<double> out;
  while (std::getline(in, line)) {
    auto last = line.rfind(',');
    if (last + 1 < line.size()) out.push_back(std::stod(line.substr(last + 1)));
  }
  return out;
}

std::string host_with_unused_port() {
  boost::asio::io_context io;
  boost::asio::ip::tcp::acceptor a(io, {boost::asio::ip::make_address("127.0.0.1"), 0});
  return "127.0.0.1:" + std::to_string(a.local_endpoint().port());
}

}  // namespace

TEST(Stats, SmallExamples) {
  auto r = stats(Kind::audio, {sample(1, 100), sample(2, 110), sample(3, 120)});
  EXPECT_DOUBLE_EQ(r.mean_ms, 110);
  EXPECT_DOUBLE_EQ(r.min_ms, 100);
  EXPECT_DOUBLE_EQ(r.max_ms, 120);
  EXPECT_DOUBLE_EQ(r.std_ms, 10);
  EXPECT_DOUBLE_EQ(r.p50_ms, 110);
  EXPECT_DOUBLE_EQ(r.p95_ms, 120);

  auto one = stats(Kind::audio, {sample(1, 364)});
  EXPECT_DOUBLE_EQ(one.mean_ms, 364);
  EXPECT_DOUBLE_EQ(one.min_ms, 364);
  EXPECT_DOUBLE_EQ(one.max_ms, 364);
  EXPECT_DOUBLE_EQ(one.std_ms, 0);
}

TEST(Stats, NearestRank) {
  std::vector<double> v;
  for (int i = 1; i <= 20; ++i) v.push_back(i);
  EXPECT_EQ(nearest_rank(v, 50), 10);
  EXPECT_EQ(nearest_rank(v, 95), 19);
  EXPECT_EQ(nearest_rank(v, 100), 20);
  EXPECT_EQ(nearest_rank(v, 0), 1);
}

TEST(Stats, LossesOnlyCount) {
  std::vector<LatencySample> s = {sample(1, 5), {2, Kind::audio, seconds(2), std::nullopt}};
  auto r = stats(Kind::audio, s);
  EXPECT_EQ(r.loss_count, 1u);
  EXPECT_EQ(r.received, 1);
  auto none = stats(Kind::audio, {{1, Kind::audio, seconds(2), std::nullopt}});
  EXPECT_TRUE(std::isnan(none.mean_ms));
  EXPECT_NE(report_text(none, {}).find("mean_ms  -"), std::string::npos);
}

TEST(Stats, OrderingInvariantOverRandomSamples) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(0, 2000);
  for (int round = 0; round < 500; ++round) {
    std::vector<LatencySample> s;
    int n = 1 + static_cast<int>(rng() % 60);
    for (int i = 1; i <= n; ++i) s.push_back(sample(i, d(rng)));
    auto r = stats(Kind::image, s);
    EXPECT_LE(r.min_ms, r.p50_ms);
    EXPECT_LE(r.p50_ms, r.p95_ms);
    EXPECT_LE(r.p95_ms, r.max_ms);
    EXPECT_GE(r.std_ms, 0);
  }
}

TEST(Csv, ExactFormat) {
  std::vector<LatencySample> s = {{1, Kind::audio, Nanos(1000), Nanos(364001001)},
                                  {2, Kind::audio, Nanos(5), std::nullopt}};
  std::ostringstream out;
  write_csv(s, out);
  EXPECT_EQ(out.str(),
            "trial,kind,t_publish_ns,t_render_ns,latency_ms\n"
            "1,audio,1000,364001001,364.000001\n"
            "2,audio,5,,\n");
}

TEST(Csv, RereadMeanMatchesReport) {
  std::mt19937_64 rng(5);
  std::vector<LatencySample> s;
  for (int i = 1; i <= 50; ++i) {
    Nanos t0(static_cast<std::int64_t>(rng() % 1'000'000'000'000));
    s.push_back({i, Kind::audio, t0, t0 + ms(364) + Nanos(static_cast<std::int64_t>(rng() % 80'000'000))});
  }
  std::ostringstream out;
  write_csv(s, out);
  auto v = csv_latencies(out.str());
  ASSERT_EQ(v.size(), 50u);
  double sum = 0;
  for (double x : v) sum += x;
  auto r = stats(Kind::audio, s);
  EXPECT_NEAR(sum / 50, r.mean_ms, 1e-9 * r.mean_ms);
}

TEST(LossAudit, CountsMissingIds) {
  EXPECT_EQ(loss_audit({1, 2, 3, 4}, {1, 3, 3}), 2u);
  EXPECT_EQ(loss_audit({}, {1}), 0u);
}

TEST(Trials, DeadBrokerIsOneLoss) {
  BenchConfig cfg;
  cfg.n = 1;
  cfg.broker = host_with_unused_port();
  auto s = run_trials(cfg);
  ASSERT_EQ(s.size(), 1u);
  EXPECT_TRUE(s[0].lost());
  EXPECT_EQ(stats(Kind::audio, s).loss_count, 1u);
}

TEST(Trials, AudioLatencyBoundedByRenderCost) {
  BenchConfig cfg;
  cfg.n = 3;
  auto s = run_trials(cfg);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& x : s) {
    ASSERT_FALSE(x.lost());
    EXPECT_GE(*x.latency_ms(), 364.0);
  }
}

TEST(Trials, ImageLatencyBoundedByRenderCost) {
  BenchConfig cfg;
  cfg.kind = Kind::image;
  cfg.n = 3;
  auto s = run_trials(cfg);
  ASSERT_EQ(s.size(), 3u);
  for (const auto& x : s) {
    ASSERT_FALSE(x.lost());
    EXPECT_GE(*x.latency_ms(), 106.0);
  }
}

TEST(Transfers, ThousandQos1WithoutLoss) {
  auto a = run_transfer_audit(1000);
  EXPECT_EQ(a.sent, 1000u);
  EXPECT_EQ(a.received, 1000u);
  EXPECT_EQ(a.loss_count, 0u);
  EXPECT_TRUE(a.in_order);
}
