// Minimal TOML-subset parser for the scenario configuration files: tables,
// scalar values (string/bool/int/float), and possibly-nested arrays, with
// line-numbered errors. Key order is preserved for canonical re-emission.
#pragma once

#include <cctype>
#include <cerrno>
#include <cstdint>
#include <cstdlib>
#include <istream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace quadsim::toml {

struct ParseError : std::runtime_error {
    int line;
    ParseError(int line_, const std::string &msg)
        : std::runtime_error("toml: line " + std::to_string(line_) + ": " + msg),
          line(line_) {}
};

struct Value {
    enum class Kind { Bool, Int, Float, String, Array };
    Kind kind = Kind::Int;
    bool b = false;
    int64_t i = 0;
    double f = 0.0;
    std::string s;
    std::vector<Value> array;
    int line = 0;

    bool is_number() const { return kind == Kind::Int || kind == Kind::Float; }
    double as_double() const {
        if (kind == Kind::Int) return static_cast<double>(i);
        if (kind == Kind::Float) return f;
        throw ParseError(line, "expected a number");
    }
    int64_t as_int() const {
        if (kind == Kind::Int) return i;
        throw ParseError(line, "expected an integer");
    }
    const std::string &as_string() const {
        if (kind != Kind::String) throw ParseError(line, "expected a string");
        return s;
    }
    bool as_bool() const {
        if (kind != Kind::Bool) throw ParseError(line, "expected a boolean");
        return b;
    }
    const std::vector<Value> &as_array() const {
        if (kind != Kind::Array) throw ParseError(line, "expected an array");
        return array;
    }
};

struct Table {
    std::vector<std::pair<std::string, Value>> entries;  // insertion order
    const Value *find(const std::string &key) const {
        for (const auto &kv : entries) {
            if (kv.first == key) return &kv.second;
        }
        return nullptr;
    }
};

struct Document {
    std::vector<std::pair<std::string, Table>> tables;  // insertion order
    Table *find(const std::string &name) {
        for (auto &t : tables) {
            if (t.first == name) return &t.second;
        }
        return nullptr;
    }
    const Table *find(const std::string &name) const {
        for (const auto &t : tables) {
            if (t.first == name) return &t.second;
        }
        return nullptr;
    }
};

namespace detail {

inline std::string strip_comment(const std::string &line) {
    bool in_string = false;
    for (size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (c == '"' && (i == 0 || line[i - 1] != '\\')) in_string = !in_string;
        if (c == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

inline std::string trim(const std::string &s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

inline int bracket_delta(const std::string &s) {
    int depth = 0;
    bool in_string = false;
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (in_string) continue;
        if (c == '[') ++depth;
        if (c == ']') --depth;
    }
    return depth;
}

// Split a top-level comma-separated list (no brackets/strings around it).
inline std::vector<std::string> split_top_level(const std::string &s, int line) {
    std::vector<std::string> parts;
    int depth = 0;
    bool in_string = false;
    std::string cur;
    for (size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '"' && (i == 0 || s[i - 1] != '\\')) in_string = !in_string;
        if (!in_string) {
            if (c == '[') ++depth;
            if (c == ']') --depth;
            if (depth < 0) throw ParseError(line, "unbalanced ']'");
            if (c == ',' && depth == 0) {
                parts.push_back(cur);
                cur.clear();
                continue;
            }
        }
        cur += c;
    }
    if (!trim(cur).empty()) parts.push_back(cur);
    return parts;
}

inline Value parse_value(const std::string &raw, int line) {
    const std::string text = trim(raw);
    if (text.empty()) throw ParseError(line, "missing value");
    Value v;
    v.line = line;

    if (text.front() == '"') {
        if (text.size() < 2 || text.back() != '"') throw ParseError(line, "unterminated string");
        v.kind = Value::Kind::String;
        for (size_t i = 1; i + 1 < text.size(); ++i) {
            if (text[i] == '\\' && i + 2 < text.size() &&
                (text[i + 1] == '"' || text[i + 1] == '\\')) {
                v.s += text[i + 1];
                ++i;
            } else {
                v.s += text[i];
            }
        }
        return v;
    }
    if (text == "true" || text == "false") {
        v.kind = Value::Kind::Bool;
        v.b = text == "true";
        return v;
    }
    if (text.front() == '[') {
        if (text.back() != ']') throw ParseError(line, "unterminated array");
        v.kind = Value::Kind::Array;
        const std::string inner = text.substr(1, text.size() - 2);
        if (!trim(inner).empty()) {
            for (const std::string &part : split_top_level(inner, line)) {
                v.array.push_back(parse_value(part, line));
            }
        }
        return v;
    }

    // Number: integer when it has no '.', exponent, or special value.
    const bool floaty = text.find_first_of(".eE") != std::string::npos ||
                        text.find("inf") != std::string::npos ||
                        text.find("nan") != std::string::npos;
    errno = 0;
    char *end = nullptr;
    if (!floaty) {
        const long long parsed = std::strtoll(text.c_str(), &end, 10);
        if (end == text.c_str() + text.size() && errno == 0) {
            v.kind = Value::Kind::Int;
            v.i = parsed;
            return v;
        }
    }
    errno = 0;
    const double parsed = std::strtod(text.c_str(), &end);
    if (end != text.c_str() + text.size() || errno == ERANGE) {
        throw ParseError(line, "cannot parse value '" + text + "'");
    }
    v.kind = Value::Kind::Float;
    v.f = parsed;
    return v;
}

inline bool valid_key(const std::string &key) {
    if (key.empty()) return false;
    for (char c : key) {
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') {
            return false;
        }
    }
    return true;
}

}  // namespace detail

inline Document parse(std::istream &is) {
    Document doc;
    doc.tables.emplace_back("", Table{});
    Table *current = &doc.tables.back().second;

    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const int statement_line = lineno;
        std::string text = detail::trim(detail::strip_comment(line));
        if (text.empty()) continue;

        if (text.front() == '[' && text.find('=') == std::string::npos) {
            if (text.back() != ']') throw ParseError(statement_line, "malformed table header");
            const std::string name = detail::trim(text.substr(1, text.size() - 2));
            if (!detail::valid_key(name)) {
                throw ParseError(statement_line, "bad table name '" + name + "'");
            }
            if (doc.find(name)) throw ParseError(statement_line, "duplicate table [" + name + "]");
            doc.tables.emplace_back(name, Table{});
            current = &doc.tables.back().second;
            continue;
        }

        const size_t eq = text.find('=');
        if (eq == std::string::npos) throw ParseError(statement_line, "expected 'key = value'");
        const std::string key = detail::trim(text.substr(0, eq));
        if (!detail::valid_key(key)) throw ParseError(statement_line, "bad key '" + key + "'");
        std::string value_text = text.substr(eq + 1);

        // Arrays may continue across lines until brackets balance.
        int depth = detail::bracket_delta(value_text);
        while (depth > 0) {
            std::string more;
            if (!std::getline(is, more)) {
                throw ParseError(statement_line, "unterminated array for key '" + key + "'");
            }
            ++lineno;
            value_text += " " + detail::trim(detail::strip_comment(more));
            depth = detail::bracket_delta(value_text);
        }
        if (depth < 0) throw ParseError(statement_line, "unbalanced ']'");

        if (current->find(key)) {
            throw ParseError(statement_line, "duplicate key '" + key + "'");
        }
        current->entries.emplace_back(key, detail::parse_value(value_text, statement_line));
    }
    return doc;
}

}  // namespace quadsim::toml
