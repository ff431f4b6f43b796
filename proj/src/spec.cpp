#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

#include "metastab/models.hpp"

namespace metastab {

namespace {

using nlohmann::json;

class TomlParser {
 public:
  explicit TomlParser(std::string_view text) : text_(text) {}

  json parse() {
    json root = json::object();
    json* table = &root;
    while (!at_end()) {
      skip_blank_lines();
      if (at_end()) break;
      if (peek() == '[') {
        table = &open_table(root);
      } else {
        auto path = parse_key();
        skip_ws();
        expect('=');
        skip_ws();
        json value = parse_value();
        json* target = table;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) target = &child_table(*target, path[i]);
        if (target->contains(path.back())) error("duplicate key '" + path.back() + "'");
        (*target)[path.back()] = std::move(value);
      }
      end_of_line();
    }
    return root;
  }

 private:
  [[noreturn]] void error(const std::string& what) const { error_at(line_, what); }
  [[noreturn]] void error_at(int line, const std::string& what) const {
    fail(ErrorCode::SpecParseError, "line " + std::to_string(line) + ": " + what);
  }

  bool at_end() const { return pos_ >= text_.size(); }
  char peek() const { return at_end() ? '\0' : text_[pos_]; }
  char get() {
    const char c = text_[pos_++];
    if (c == '\n') ++line_;
    return c;
  }
  void expect(char c) {
    if (peek() != c) error(std::string("expected '") + c + "'");
    get();
  }
  void skip_ws() {
    while (peek() == ' ' || peek() == '\t') get();
  }
  void skip_comment() {
    if (peek() == '#')
      while (!at_end() && peek() != '\n') get();
  }
  void skip_blank_lines() {
    while (!at_end()) {
      skip_ws();
      skip_comment();
      if (peek() == '\r') get();
      if (peek() == '\n') get();
      else break;
    }
  }
  // Whitespace, comments and newlines inside arrays.
  void skip_array_space() {
    while (!at_end()) {
      skip_ws();
      skip_comment();
      if (peek() == '\n' || peek() == '\r') get();
      else break;
    }
  }
  void end_of_line() {
    skip_ws();
    skip_comment();
    if (peek() == '\r') get();
    if (at_end()) return;
    if (peek() != '\n') error("unexpected text after value");
    get();
  }

  std::string parse_simple_key() {
    if (peek() == '"' || peek() == '\'') return parse_string();
    std::string k;
    while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-') k += get();
    if (k.empty()) error("expected a key");
    return k;
  }

  std::vector<std::string> parse_key() {
    std::vector<std::string> path{parse_simple_key()};
    skip_ws();
    while (peek() == '.') {
      get();
      skip_ws();
      path.push_back(parse_simple_key());
      skip_ws();
    }
    return path;
  }

  json& child_table(json& parent, const std::string& key) {
    if (!parent.contains(key)) parent[key] = json::object();
    json& c = parent[key];
    if (!c.is_object()) error("key '" + key + "' is not a table");
    return c;
  }

  json& open_table(json& root) {
    expect('[');
    if (peek() == '[') error("arrays of tables are not supported");
    skip_ws();
    auto path = parse_key();
    expect(']');
    json* t = &root;
    for (const auto& k : path) t = &child_table(*t, k);
    return *t;
  }

  std::string parse_string() {
    const char quote = get();
    std::string s;
    while (true) {
      if (at_end() || peek() == '\n') error("unterminated string");
      char c = get();
      if (c == quote) break;
      if (c == '\\' && quote == '"') {
        if (at_end()) error("unterminated string");
        switch (char e = get()) {
          case 'n': s += '\n'; break;
          case 't': s += '\t'; break;
          case 'r': s += '\r'; break;
          case '"': s += '"'; break;
          case '\\': s += '\\'; break;
          default: error(std::string("unsupported escape \\") + e);
        }
        continue;
      }
      s += c;
    }
    return s;
  }

  json parse_number_or_word() {
    std::string tok;
    while (!at_end() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' ||
                         peek() == '-' || peek() == '.' || peek() == '_'))
      tok += get();
    if (tok == "true") return true;
    if (tok == "false") return false;
    if (tok.empty()) error("expected a value");
    std::string clean;
    for (char c : tok)
      if (c != '_') clean += c;
    std::string body = clean;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) body = body.substr(1);
    if (body == "inf" || body == "nan") {
      const double v = body == "inf" ? std::numeric_limits<double>::infinity()
                                     : std::numeric_limits<double>::quiet_NaN();
      return clean[0] == '-' ? -v : v;
    }
    const bool is_float = clean.find_first_of(".eE") != std::string::npos;
    try {
      std::size_t used = 0;
      if (is_float) {
        const double v = std::stod(clean, &used);
        if (used == clean.size()) return v;
      } else {
        const long long v = std::stoll(clean, &used);
        if (used == clean.size()) return v;
      }
    } catch (const std::exception&) {
    }
    error("invalid value '" + tok + "'");
  }

  json parse_value() {
    const char c = peek();
    if (c == '"' || c == '\'') return parse_string();
    if (c == '[') {
      const int start = line_;
      get();
      json arr = json::array();
      skip_array_space();
      while (peek() != ']') {
        if (at_end()) error_at(start, "unterminated array");
        arr.push_back(parse_value());
        skip_array_space();
        if (at_end()) error_at(start, "unterminated array");
        if (peek() == ',') {
          get();
          skip_array_space();
        } else if (peek() != ']') {
          error("expected ',' or ']' in array");
        }
      }
      get();
      return arr;
    }
    if (c == '{') {
      get();
      json obj = json::object();
      skip_ws();
      while (peek() != '}') {
        auto path = parse_key();
        skip_ws();
        expect('=');
        skip_ws();
        json* t = &obj;
        for (std::size_t i = 0; i + 1 < path.size(); ++i) t = &child_table(*t, path[i]);
        (*t)[path.back()] = parse_value();
        skip_ws();
        if (peek() == ',') {
          get();
          skip_ws();
        } else if (peek() != '}') {
          error("expected ',' or '}' in inline table");
        }
      }
      get();
      return obj;
    }
    return parse_number_or_word();
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

const std::vector<std::string> kFamilies{"zero_range", "inclusion", "potential_walk", "singular_graph"};

[[noreturn]] void spec_error(const std::string& what) { fail(ErrorCode::SpecParseError, what); }

int get_int(const json& p, const char* key) {
  if (!p.contains(key)) spec_error(std::string("missing parameter '") + key + "'");
  const auto& v = p[key];
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) return static_cast<int>(v.get<double>());
  spec_error(std::string("parameter '") + key + "' must be an integer");
}

int get_int(const json& p, const char* key, int fallback) {
  return p.contains(key) ? get_int(p, key) : fallback;
}

double get_double(const json& p, const char* key, double fallback) {
  if (!p.contains(key)) return fallback;
  if (!p[key].is_number()) spec_error(std::string("parameter '") + key + "' must be a number");
  return p[key].get<double>();
}

std::vector<double> get_vector(const json& v, const char* key) {
  try {
    return v.get<std::vector<double>>();
  } catch (const json::exception&) {
    spec_error(std::string("parameter '") + key + "' must be a list of numbers");
  }
}

PotentialField field_from_json(const json& p) {
  PotentialField f;
  const auto& pot = p.contains("potential") ? p["potential"] : json("double_well_1d");
  if (pot.is_string()) {
    f = builtin_potential(pot.get<std::string>());
  } else if (pot.is_object()) {
    f.name = pot.value("name", std::string("custom"));
    if (!pot.contains("lower") || !pot.contains("upper") || !pot.contains("values"))
      spec_error("custom potential needs lower, upper and values");
    f.lower = get_vector(pot["lower"], "lower");
    f.upper = get_vector(pot["upper"], "upper");
    f.dim = static_cast<int>(f.lower.size());
    f.values = get_vector(pot["values"], "values");
  } else {
    spec_error("parameter 'potential' must be a name or a table");
  }
  if (p.contains("minima")) {
    f.minima.clear();
    for (const auto& m : p["minima"]) f.minima.push_back(get_vector(m, "minima"));
  }
  if (p.contains("saddle")) f.saddle = get_vector(p["saddle"], "saddle");
  return f;
}

}  // namespace

json parse_toml(std::string_view text) { return TomlParser(text).parse(); }

json parse_spec_text(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string_view::npos && text[first] == '{') {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      spec_error(std::string("invalid JSON: ") + e.what());
    }
  }
  return parse_toml(text);
}

ModelSpec model_spec_from_json(const json& doc) {
  if (!doc.is_object()) spec_error("model spec must be a table");
  if (!doc.contains("family") || !doc["family"].is_string()) spec_error("model spec needs a 'family' string");
  ModelSpec s;
  s.family = doc["family"].get<std::string>();
  if (std::find(kFamilies.begin(), kFamilies.end(), s.family) == kFamilies.end())
    spec_error("unknown model family '" + s.family + "'");
  if (doc.contains("parameters")) {
    if (!doc["parameters"].is_object()) spec_error("'parameters' must be a table");
    s.parameters = doc["parameters"];
  }
  for (const auto& [k, v] : doc.items())
    if (k != "family" && k != "parameters" && k != "partition") s.parameters[k] = v;
  if (doc.contains("partition")) s.partition = doc["partition"];
  return s;
}

json to_json(const ModelSpec& s) {
  json j{{"family", s.family}, {"parameters", s.parameters}};
  if (!s.partition.is_null()) j["partition"] = s.partition;
  return j;
}

ModelInstance build_model(const ModelSpec& spec, std::optional<int> N_override) {
  const json& p = spec.parameters;
  const int N = N_override ? *N_override : get_int(p, "N");
  ModelInstance m;
  if (spec.family == "zero_range") {
    int ell = std::max(1, N / 4);
    if (p.contains("ell_fraction"))
      ell = std::max(1, static_cast<int>(std::floor(N * get_double(p, "ell_fraction", 0.25))));
    ell = get_int(p, "ell", ell);
    m = zero_range(get_int(p, "L", 2), N, get_double(p, "alpha", 2.0), get_double(p, "p", 0.5), ell);
  } else if (spec.family == "inclusion") {
    double d;
    if (p.contains("d")) d = get_double(p, "d", 0.0);
    else if (N >= 2) d = 1.0 / std::pow(std::log(static_cast<double>(N)), 2);
    else spec_error("parameter 'd' is required when N < 2");
    m = inclusion(get_int(p, "L", 2), N, d);
  } else if (spec.family == "potential_walk") {
    m = potential_walk(field_from_json(p), N, get_double(p, "kappa", 0.5));
  } else {
    const int ell = get_int(p, "ell", std::max(1, N / 8));
    const int M = get_int(p, "M", std::max(ell + 1, N / 4));
    m = singular_graph(N, get_int(p, "d", 2), ell, M, p.value("compute_theta", true));
  }
  if (!spec.partition.is_null()) {
    m.partition = partition_from_json(spec.partition);
    if (m.partition.num_states() != m.chain.size())
      fail(ErrorCode::SupportMismatch, "partition override does not match the model size");
    m.parameters["partition_override"] = true;
  }
  return m;
}

}  // namespace metastab
