#pragma once

// JSON config access that reports failures with full field paths, plus the
// run-manifest writer shared by all commands.

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pairedepi/csvio.hpp"
#include "pairedepi/errors.hpp"

namespace pairedepi::cli {

class ConfigView {
 public:
  ConfigView(const nlohmann::json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const nlohmann::json& raw() const { return *j_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidInputError("config error at " + (path_.empty() ? "<root>" : path_) + ": " + what);
  }

  bool has(const std::string& key) const { return j_->is_object() && j_->contains(key); }

  ConfigView at(const std::string& key) const {
    if (!j_->is_object()) fail("expected an object");
    const std::string child = path_.empty() ? key : path_ + "." + key;
    if (!j_->contains(key)) {
      throw InvalidInputError("config error at " + child + ": missing required value");
    }
    return ConfigView((*j_)[key], child);
  }

  std::optional<ConfigView> maybe(const std::string& key) const {
    if (!has(key)) return std::nullopt;
    return at(key);
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }

  long integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    return j_->get<long>();
  }

  std::uint64_t uinteger() const {
    if (!j_->is_number_unsigned() && !(j_->is_number_integer() && j_->get<long>() >= 0)) {
      fail("expected a non-negative integer");
    }
    return j_->get<std::uint64_t>();
  }

  std::string str() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  std::vector<double> number_array() const {
    if (!j_->is_array()) fail("expected an array of numbers");
    std::vector<double> out;
    for (const auto& v : *j_) {
      if (!v.is_number()) fail("expected an array of numbers");
      out.push_back(v.get<double>());
    }
    return out;
  }

  std::size_t array_size() const {
    if (!j_->is_array()) fail("expected an array");
    return j_->size();
  }

  ConfigView item(std::size_t k) const {
    return ConfigView((*j_)[k], path_ + "[" + std::to_string(k) + "]");
  }

  double number_or(const std::string& key, double fallback) const {
    const auto v = maybe(key);
    return v ? v->number() : fallback;
  }

  long integer_or(const std::string& key, long fallback) const {
    const auto v = maybe(key);
    return v ? v->integer() : fallback;
  }

  std::string str_or(const std::string& key, const std::string& fallback) const {
    const auto v = maybe(key);
    return v ? v->str() : fallback;
  }

 private:
  const nlohmann::json* j_;
  std::string path_;
};

inline nlohmann::json load_config_json(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInputError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

inline std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm_utc{};
  gmtime_r(&t, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

/// One manifest per output directory: command, resolved config, input
/// digests, seed, version, timestamps.
class ManifestBuilder {
 public:
  ManifestBuilder(std::string command, std::uint64_t seed, int threads)
      : command_(std::move(command)), seed_(seed), threads_(threads),
        started_(iso8601_now()) {}

  void set_config(nlohmann::json resolved) { config_ = std::move(resolved); }

  void add_input(const std::filesystem::path& path, const std::string& bytes) {
    inputs_.push_back({{"path", path.string()}, {"fnv1a64", fnv1a64_hex(bytes)}});
  }

  void add_output(const std::string& name) { outputs_.push_back(name); }

  void write(const std::filesystem::path& out_dir, const std::string& version) const {
    nlohmann::json manifest;
    manifest["command"] = command_;
    manifest["version"] = version;
    manifest["seed"] = seed_;
    manifest["threads"] = threads_;
    manifest["config"] = config_;
    manifest["inputs"] = inputs_;
    manifest["outputs"] = outputs_;
    manifest["started_at"] = started_;
    manifest["finished_at"] = iso8601_now();
    write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::uint64_t seed_;
  int threads_;
  std::string started_;
  nlohmann::json config_;
  nlohmann::json inputs_ = nlohmann::json::array();
  std::vector<std::string> outputs_;
};

}  // namespace pairedepi::cli
