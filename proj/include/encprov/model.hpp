#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "encprov/graph.hpp"

namespace encprov {

/// How a function's graph was obtained. `Runtime` marks the built-in graphs
/// of the simulated SDK, which are constructed rather than extracted.
enum class ExtractionMethod : std::uint8_t { Symbolic, InsensitiveFallback, Runtime };

std::string_view to_string(ExtractionMethod m);

struct FunctionModel {
  std::string name;
  std::uint64_t entry = 0;
  ExtractionMethod method = ExtractionMethod::Symbolic;
  ActionGraph graph;
};

/// Behavioural model of one enclave: a graph of actions per function plus
/// the secure-function table.
class EnclaveModel {
 public:
  void add_function(FunctionModel f);
  void set_secure(std::int64_t index, std::string function);

  const std::map<std::string, FunctionModel>& functions() const { return functions_; }
  const std::map<std::int64_t, std::string>& secure_table() const { return secure_; }
  const FunctionModel* find(std::string_view name) const;

  /// Throws ModelError when a secure index is negative or names an unknown
  /// function, or two functions share an entry address.
  void validate() const;

  /// Deterministic text without the trailing MAC line.
  std::string serialize_body() const;
  /// Body followed by `MAC <hex>` computed with HMAC-SHA256 under `mac_key`.
  std::string serialize(std::span<const std::uint8_t> mac_key) const;

  /// Parses a serialized model and verifies its MAC. Throws
  /// ModelIntegrityError on MAC failure and ModelError on syntax errors.
  static EnclaveModel parse(std::string_view text, std::span<const std::uint8_t> mac_key);

  friend bool operator==(const EnclaveModel& a, const EnclaveModel& b) {
    return a.serialize_body() == b.serialize_body();
  }

 private:
  std::map<std::string, FunctionModel> functions_;
  std::map<std::int64_t, std::string> secure_;
};

EnclaveModel load_model(const std::string& path, std::span<const std::uint8_t> mac_key);
void save_model(const EnclaveModel& m, const std::string& path, std::span<const std::uint8_t> mac_key);

/// Reads a MAC key file (hex text). Throws ModelError if unreadable.
std::vector<std::uint8_t> load_mac_key(const std::string& path);
/// Loads the key at `path`, creating a fresh random one if the file is absent.
std::vector<std::uint8_t> load_or_create_mac_key(const std::string& path);

}  // namespace encprov
