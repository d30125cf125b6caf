#include <gtest/gtest.h>

#include <regex>

#include "aal/mqtt/topic.hpp"

using aal::mqtt::InvalidFilter;
using aal::mqtt::is_valid_filter;
using aal::mqtt::topic_matches;

namespace {

// Regular-expression translation of a filter: an independent route to the same relation.
std::regex filter_regex(const std::string& filter) {
  std::string re;
  std::size_t start = 0;
  bool first = true;
  while (start <= filter.size()) {
    auto slash = filter.find('/', start);
    auto level = filter.substr(start, slash == std::string::npos ? std::string::npos : slash - start);
    if (level == "#") {
      re += first ? ".*" : "(/.*)?";
      break;
    }
    if (!first) re += "/";
    re += level == "+" ? "[^/]*" : level;
    first = false;
    if (slash == std::string::npos) break;
    start = slash + 1;
  }
  return std::regex(re);
}

std::vector<std::string> sequences(const std::vector<std::string>& alphabet, int max_levels) {
  std::vector<std::string> out;
  std::vector<std::string> frontier{""};
  for (int depth = 1; depth <= max_levels; ++depth) {
    std::vector<std::string> next;
    for (const auto& prefix : frontier) {
      for (const auto& sym : alphabet) next.push_back(prefix.empty() ? sym : prefix + "/" + sym);
    }
    out.insert(out.end(), next.begin(), next.end());
    frontier = std::move(next);
  }
  return out;
}

}  // namespace

TEST(TopicMatches, SpecExamples) {
  EXPECT_TRUE(topic_matches("home/+/flame", "home/kitchen/flame"));
  EXPECT_TRUE(topic_matches("home/#", "home/kitchen/oven/relay"));
  EXPECT_FALSE(topic_matches("home/+", "home/kitchen/flame"));
}

TEST(TopicMatches, EdgeCases) {
  EXPECT_TRUE(topic_matches("#", "a"));
  EXPECT_TRUE(topic_matches("a/#", "a"));
  EXPECT_TRUE(topic_matches("+", ""));
  EXPECT_TRUE(topic_matches("a/+/c", "a//c"));
  EXPECT_FALSE(topic_matches("a/+", "a"));
  EXPECT_FALSE(topic_matches("a", "a/b"));
  EXPECT_TRUE(topic_matches("/+", "/x"));
  EXPECT_FALSE(topic_matches("#", "$SYS/uptime"));
  EXPECT_FALSE(topic_matches("+/uptime", "$SYS/uptime"));
  EXPECT_TRUE(topic_matches("$SYS/#", "$SYS/uptime"));
}

TEST(TopicMatches, InvalidFiltersThrow) {
  for (const char* f : {"", "a/#/b", "a#", "a+/b", "#/a", "a/b+"}) {
    EXPECT_FALSE(is_valid_filter(f)) << f;
    EXPECT_THROW(topic_matches(f, "a"), InvalidFilter) << f;
  }
}

TEST(TopicMatches, AgreesWithRegexTranslation) {
  auto filters = sequences({"a", "b", "+", "#"}, 4);
  auto topics = sequences({"a", "b", ""}, 4);
  int compared = 0;
  for (const auto& f : filters) {
    if (!is_valid_filter(f)) continue;
    auto re = filter_regex(f);
    for (const auto& t : topics) {
      ASSERT_EQ(topic_matches(f, t), std::regex_match(t, re)) << f << " vs " << t;
      ++compared;
    }
  }
  EXPECT_GT(compared, 10000);
}
