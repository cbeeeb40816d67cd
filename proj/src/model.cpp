#include "encprov/model.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "encprov/crypto.hpp"
#include "encprov/errors.hpp"

namespace encprov {

namespace {

constexpr std::string_view kHeader = "ENCPROV-MODEL 1";

std::string hex64(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "0x%llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
T parse_int(std::string_view s, std::size_t line) {
  int base = 10;
  if (s.starts_with("0x")) {
    s.remove_prefix(2);
    base = 16;
  }
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw ModelError("model line " + std::to_string(line) + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string_view to_string(ExtractionMethod m) {
  switch (m) {
    case ExtractionMethod::Symbolic: return "symbolic";
    case ExtractionMethod::InsensitiveFallback: return "insensitive-fallback";
    case ExtractionMethod::Runtime: return "runtime";
  }
  return "?";
}

void EnclaveModel::add_function(FunctionModel f) {
  auto name = f.name;
  functions_.insert_or_assign(std::move(name), std::move(f));
}

void EnclaveModel::set_secure(std::int64_t index, std::string function) {
  secure_.insert_or_assign(index, std::move(function));
}

const FunctionModel* EnclaveModel::find(std::string_view name) const {
  auto it = functions_.find(std::string(name));
  return it == functions_.end() ? nullptr : &it->second;
}

void EnclaveModel::validate() const {
  for (const auto& [index, name] : secure_) {
    if (index < 0) throw ModelError("negative secure-function index " + std::to_string(index));
    if (!functions_.contains(name)) throw ModelError("secure index maps to unknown function " + name);
  }
  std::set<std::uint64_t> entries;
  for (const auto& [name, f] : functions_)
    if (!entries.insert(f.entry).second) throw ModelError("duplicate entry address for " + name);
}

std::string EnclaveModel::serialize_body() const {
  std::ostringstream out;
  out << kHeader << '\n';
  for (const auto& [index, name] : secure_) out << "SECURE " << index << ' ' << name << '\n';
  for (const auto& [name, f] : functions_) {
    const ActionGraph g = f.graph.canonical();
    out << "FUNC " << name << ' ' << hex64(f.entry) << ' ' << to_string(f.method) << '\n';
    for (VertexId v = 0; v < g.vertex_count(); ++v) {
      const auto& p = g.vertex(v);
      out << "V " << v << ' ' << tag_letter(p.type) << ' ' << (p.src ? hex64(*p.src) : "null") << ' '
          << to_string(p.cond) << '\n';
    }
    for (VertexId v = 0; v < g.vertex_count(); ++v)
      for (VertexId w : g.successors(v)) out << "E " << v << ' ' << w << '\n';
    for (VertexId v : g.entries()) out << "ENTRY " << v << '\n';
    out << "END\n";
  }
  return out.str();
}

std::string EnclaveModel::serialize(std::span<const std::uint8_t> mac_key) const {
  std::string body = serialize_body();
  const Digest mac = hmac_sha256(mac_key, as_bytes(body));
  body += "MAC ";
  body += to_hex(mac);
  body += '\n';
  return body;
}

EnclaveModel EnclaveModel::parse(std::string_view text, std::span<const std::uint8_t> mac_key) {
  const auto mac_pos = text.rfind("MAC ");
  if (mac_pos == std::string_view::npos || (mac_pos != 0 && text[mac_pos - 1] != '\n'))
    throw ModelIntegrityError("model has no MAC line");
  const std::string_view body = text.substr(0, mac_pos);
  auto mac_hex = text.substr(mac_pos + 4);
  while (!mac_hex.empty() && (mac_hex.back() == '\n' || mac_hex.back() == '\r')) mac_hex.remove_suffix(1);
  std::vector<std::uint8_t> mac;
  try {
    mac = from_hex(mac_hex);
  } catch (const std::invalid_argument&) {
    throw ModelIntegrityError("malformed MAC line");
  }
  const Digest expected = hmac_sha256(mac_key, as_bytes(body));
  if (!equal_ct(mac, expected)) throw ModelIntegrityError("model MAC does not verify");

  EnclaveModel model;
  FunctionModel* current = nullptr;
  FunctionModel pending;
  bool in_function = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool saw_header = false;
  while (pos < body.size()) {
    auto nl = body.find('\n', pos);
    if (nl == std::string_view::npos) nl = body.size();
    const auto line = body.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const auto tok = split(line);
    if (tok.empty()) continue;
    auto fail = [&](const std::string& why) -> ModelError {
      return ModelError("model line " + std::to_string(line_no) + ": " + why);
    };
    if (!saw_header) {
      if (line != kHeader) throw fail("missing header");
      saw_header = true;
      continue;
    }
    const auto kw = tok[0];
    if (kw == "SECURE") {
      if (tok.size() != 3) throw fail("SECURE expects index and name");
      model.set_secure(parse_int<std::int64_t>(tok[1], line_no), std::string(tok[2]));
    } else if (kw == "FUNC") {
      if (in_function || tok.size() != 4) throw fail("malformed FUNC");
      pending = FunctionModel{};
      pending.name = std::string(tok[1]);
      pending.entry = parse_int<std::uint64_t>(tok[2], line_no);
      if (tok[3] == "symbolic")
        pending.method = ExtractionMethod::Symbolic;
      else if (tok[3] == "insensitive-fallback")
        pending.method = ExtractionMethod::InsensitiveFallback;
      else if (tok[3] == "runtime")
        pending.method = ExtractionMethod::Runtime;
      else
        throw fail("unknown extraction method");
      current = &pending;
      in_function = true;
    } else if (kw == "V") {
      if (!current || tok.size() != 5) throw fail("malformed V");
      const auto id = parse_int<VertexId>(tok[1], line_no);
      if (id != current->graph.vertex_count()) throw fail("vertex ids must be dense and ordered");
      if (tok[2].size() != 1) throw fail("bad tag");
      auto type = type_from_letter(tok[2][0]);
      if (!type) throw fail("bad tag");
      ActionPattern p;
      p.type = *type;
      if (tok[3] != "null") p.src = parse_int<std::uint64_t>(tok[3], line_no);
      auto cond = parse_condition(tok[4]);
      if (!cond) throw fail("bad condition");
      p.cond = *cond;
      try {
        current->graph.add_vertex(p);
      } catch (const DuplicateVertex& e) {
        throw fail(e.what());
      }
    } else if (kw == "E") {
      if (!current || tok.size() != 3) throw fail("malformed E");
      try {
        current->graph.add_edge(parse_int<VertexId>(tok[1], line_no), parse_int<VertexId>(tok[2], line_no));
      } catch (const ContractViolation& e) {
        throw fail(e.what());
      }
    } else if (kw == "ENTRY") {
      if (!current || tok.size() != 2) throw fail("malformed ENTRY");
      try {
        current->graph.add_entry(parse_int<VertexId>(tok[1], line_no));
      } catch (const ContractViolation& e) {
        throw fail(e.what());
      }
    } else if (kw == "END") {
      if (!in_function) throw fail("END outside FUNC");
      model.add_function(std::move(pending));
      current = nullptr;
      in_function = false;
    } else {
      throw fail("unknown record " + std::string(kw));
    }
  }
  if (!saw_header) throw ModelError("empty model");
  if (in_function) throw ModelError("unterminated FUNC");
  model.validate();
  return model;
}

EnclaveModel load_model(const std::string& path, std::span<const std::uint8_t> mac_key) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ModelError("cannot open model " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return EnclaveModel::parse(ss.str(), mac_key);
}

void save_model(const EnclaveModel& m, const std::string& path, std::span<const std::uint8_t> mac_key) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ModelError("cannot write model " + path);
  out << m.serialize(mac_key);
  if (!out) throw ModelError("short write to " + path);
}

std::vector<std::uint8_t> load_mac_key(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open MAC key file " + path);
  std::string hex;
  in >> hex;
  try {
    auto key = from_hex(hex);
    if (key.size() < 16) throw ModelError("MAC key in " + path + " is shorter than 16 bytes");
    return key;
  } catch (const std::invalid_argument&) {
    throw ModelError("MAC key file " + path + " is not hex");
  }
}

std::vector<std::uint8_t> load_or_create_mac_key(const std::string& path) {
  if (std::ifstream probe(path); probe) return load_mac_key(path);
  std::vector<std::uint8_t> key(32);
  random_bytes(key);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ModelError("cannot create MAC key file " + path);
  out << to_hex(key) << '\n';
  return key;
}

}  // namespace encprov
