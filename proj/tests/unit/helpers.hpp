#pragma once

#include "waitcast/data.hpp"
#include "waitcast/error.hpp"
#include "waitcast/rng.hpp"

#include <doctest.h>

#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace testing {

inline waitcast::UtteranceSeries series_with(std::string id, std::vector<int> ones,
                                             waitcast::Age age = waitcast::Age::three,
                                             waitcast::Category cat = waitcast::Category::problem) {
  std::vector<std::uint8_t> v(waitcast::kTaskSeconds, 0);
  for (int t : ones) v[static_cast<std::size_t>(t)] = 1;
  return {std::move(id), age, cat, std::move(v)};
}

inline waitcast::UtteranceSeries random_series(waitcast::Rng& rng, std::string id, double p = 0.3,
                                               waitcast::Age age = waitcast::Age::three,
                                               waitcast::Category cat = waitcast::Category::problem) {
  std::vector<std::uint8_t> v(waitcast::kTaskSeconds, 0);
  for (auto& x : v) x = rng.bernoulli(p) ? 1 : 0;
  return {std::move(id), age, cat, std::move(v)};
}

inline Eigen::MatrixXd random_matrix(waitcast::Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = scale * rng.normal();
  return m;
}

template <typename Fn>
waitcast::Errc error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const waitcast::Error& e) {
    return e.code();
  }
  FAIL("expected a waitcast::Error");
  return waitcast::Errc::io_error;
}

/// Fresh directory under the system temp dir, removed on destruction.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("waitcast-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

}  // namespace testing

namespace testing {

/// Minimal XML well-formedness check: balanced, properly nested tags,
/// quoted attributes, known entities only.
inline bool well_formed_xml(const std::string& text) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  bool root_seen = false;
  while (i < text.size()) {
    if (text[i] == '&') {
      const auto semi = text.find(';', i);
      if (semi == std::string::npos) return false;
      const auto ent = text.substr(i, semi - i + 1);
      if (ent != "&amp;" && ent != "&lt;" && ent != "&gt;" && ent != "&quot;" && ent != "&apos;") return false;
      i = semi + 1;
      continue;
    }
    if (text[i] == '>') return false;
    if (text[i] != '<') {
      ++i;
      continue;
    }
    if (text.compare(i, 2, "<?") == 0) {
      const auto end = text.find("?>", i);
      if (end == std::string::npos) return false;
      i = end + 2;
      continue;
    }
    if (text.compare(i, 4, "<!--") == 0) {
      const auto end = text.find("-->", i);
      if (end == std::string::npos) return false;
      i = end + 3;
      continue;
    }
    const bool closing = i + 1 < text.size() && text[i + 1] == '/';
    std::size_t j = i + (closing ? 2 : 1);
    std::string name;
    while (j < text.size() && (std::isalnum(static_cast<unsigned char>(text[j])) || text[j] == '-' || text[j] == ':'))
      name += text[j++];
    if (name.empty()) return false;
    char quote = 0;
    while (j < text.size() && (quote || text[j] != '>')) {
      if (quote) {
        if (text[j] == quote) quote = 0;
        else if (text[j] == '<') return false;
      } else if (text[j] == '"' || text[j] == '\'') {
        quote = text[j];
      }
      ++j;
    }
    if (j >= text.size()) return false;
    const bool self_closing = text[j - 1] == '/';
    if (closing) {
      if (stack.empty() || stack.back() != name) return false;
      stack.pop_back();
    } else if (!self_closing) {
      if (stack.empty() && root_seen) return false;
      root_seen = true;
      stack.push_back(name);
    } else if (stack.empty()) {
      if (root_seen) return false;
      root_seen = true;
    }
    i = j + 1;
  }
  return stack.empty() && root_seen;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace testing
