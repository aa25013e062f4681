#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace ifv::minitoml {

// Small TOML subset sufficient for experiment configs: [section] headers and
// key = value lines, where values are integers, floats, booleans, quoted
// strings, or single-line arrays of those. Comments start with '#'.

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<std::int64_t, double, bool, std::string, Array> v;

    bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
    bool is_float() const { return std::holds_alternative<double>(v); }
    bool is_bool() const { return std::holds_alternative<bool>(v); }
    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_array() const { return std::holds_alternative<Array>(v); }

    std::int64_t as_int() const {
        if (is_int()) return std::get<std::int64_t>(v);
        throw std::runtime_error("config value is not an integer");
    }
    double as_float() const {
        if (is_float()) return std::get<double>(v);
        if (is_int()) return static_cast<double>(std::get<std::int64_t>(v));
        throw std::runtime_error("config value is not a number");
    }
    bool as_bool() const {
        if (is_bool()) return std::get<bool>(v);
        throw std::runtime_error("config value is not a boolean");
    }
    const std::string& as_string() const {
        if (is_string()) return std::get<std::string>(v);
        throw std::runtime_error("config value is not a string");
    }
    const Array& as_array() const {
        if (is_array()) return std::get<Array>(v);
        throw std::runtime_error("config value is not an array");
    }
};

using Table = std::map<std::string, Value>;

struct Document {
    std::map<std::string, Table> sections;

    bool has(const std::string& section) const { return sections.count(section) > 0; }

    const Table& section(const std::string& name) const {
        auto it = sections.find(name);
        if (it == sections.end()) throw std::runtime_error("config: missing section [" + name + "]");
        return it->second;
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::string strip_comment(const std::string& line) {
    bool in_str = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_str = !in_str;
        if (line[i] == '#' && !in_str) return line.substr(0, i);
    }
    return line;
}

Value parse_value(const std::string& raw, int line_no);

inline Value parse_scalar(const std::string& s, int line_no) {
    if (s == "true") return Value{true};
    if (s == "false") return Value{false};
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        return Value{s.substr(1, s.size() - 2)};
    bool looks_float = s.find('.') != std::string::npos || s.find('e') != std::string::npos ||
                       s.find('E') != std::string::npos;
    try {
        std::size_t used = 0;
        if (looks_float) {
            double d = std::stod(s, &used);
            if (used == s.size()) return Value{d};
        } else {
            std::int64_t i = std::stoll(s, &used, 10);
            if (used == s.size()) return Value{i};
        }
    } catch (const std::exception&) {
    }
    throw std::runtime_error("config line " + std::to_string(line_no) + ": cannot parse value '" +
                             s + "'");
}

inline Value parse_value(const std::string& raw, int line_no) {
    std::string s = trim(raw);
    if (s.empty())
        throw std::runtime_error("config line " + std::to_string(line_no) + ": empty value");
    if (s.front() == '[') {
        if (s.back() != ']')
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": arrays must close on the same line");
        Array arr;
        std::string inner = s.substr(1, s.size() - 2);
        std::string item;
        int depth = 0;
        bool in_str = false;
        for (char c : inner) {
            if (c == '"') in_str = !in_str;
            if (c == '[' && !in_str) ++depth;
            if (c == ']' && !in_str) --depth;
            if (c == ',' && depth == 0 && !in_str) {
                arr.push_back(parse_value(item, line_no));
                item.clear();
            } else {
                item += c;
            }
        }
        if (!trim(item).empty()) arr.push_back(parse_value(item, line_no));
        return Value{std::move(arr)};
    }
    return parse_scalar(s, line_no);
}

}  // namespace detail

inline Document parse_string(const std::string& text) {
    Document doc;
    std::string current;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::string s = detail::trim(detail::strip_comment(line));
        if (s.empty()) continue;
        if (s.front() == '[') {
            if (s.back() != ']')
                throw std::runtime_error("config line " + std::to_string(line_no) +
                                         ": malformed section header");
            current = detail::trim(s.substr(1, s.size() - 2));
            doc.sections[current];  // create even if empty
            continue;
        }
        std::size_t eq = s.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config line " + std::to_string(line_no) +
                                     ": expected key = value");
        std::string key = detail::trim(s.substr(0, eq));
        if (key.empty())
            throw std::runtime_error("config line " + std::to_string(line_no) + ": empty key");
        doc.sections[current][key] = detail::parse_value(s.substr(eq + 1), line_no);
    }
    return doc;
}

inline Document parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str());
}

// typed lookups with defaults
inline std::int64_t get_int(const Table& t, const std::string& key, std::int64_t dflt) {
    auto it = t.find(key);
    return it == t.end() ? dflt : it->second.as_int();
}
inline double get_float(const Table& t, const std::string& key, double dflt) {
    auto it = t.find(key);
    return it == t.end() ? dflt : it->second.as_float();
}
inline bool get_bool(const Table& t, const std::string& key, bool dflt) {
    auto it = t.find(key);
    return it == t.end() ? dflt : it->second.as_bool();
}
inline std::string get_string(const Table& t, const std::string& key, const std::string& dflt) {
    auto it = t.find(key);
    return it == t.end() ? dflt : it->second.as_string();
}

}  // namespace ifv::minitoml
