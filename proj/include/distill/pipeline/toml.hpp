#pragma once

// A small TOML subset: [tables] (dotted names), key = value pairs with bare
// keys, basic strings, integers, floats, booleans and arrays of those
// (arrays may span lines). Inline tables, dates and literal strings are not
// supported. Keys are flattened to dotted paths, e.g. "student.epochs".

#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "distill/error.hpp"

namespace distill::toml {

struct Value;
using Array = std::vector<Value>;

struct Value {
    std::variant<bool, std::int64_t, double, std::string, Array> v;

    bool is_bool() const { return std::holds_alternative<bool>(v); }
    bool is_int() const { return std::holds_alternative<std::int64_t>(v); }
    bool is_float() const { return std::holds_alternative<double>(v); }
    bool is_string() const { return std::holds_alternative<std::string>(v); }
    bool is_array() const { return std::holds_alternative<Array>(v); }
};

using Table = std::map<std::string, Value>;

namespace detail {

class Parser {
public:
    Parser(const std::string& text, std::string source) : s_(text), source_(std::move(source)) {}

    Table parse() {
        Table out;
        std::string prefix;
        while (true) {
            skip_blank_lines();
            if (pos_ >= s_.size()) break;
            if (s_[pos_] == '[') {
                ++pos_;
                skip_ws();
                std::string name = dotted_key();
                skip_ws();
                expect(']');
                prefix = name + ".";
            } else {
                const std::string key = prefix + dotted_key();
                skip_ws();
                expect('=');
                skip_ws();
                Value value = parse_value();
                if (!out.emplace(key, std::move(value)).second) fail("duplicate key '" + key + "'");
            }
            end_of_line();
        }
        return out;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw ConfigError(source_ + ":" + std::to_string(line_) + ": " + what);
    }

    void skip_ws() {
        while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
    }

    void skip_comment() {
        if (pos_ < s_.size() && s_[pos_] == '#') {
            while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        }
    }

    void skip_blank_lines() {
        while (pos_ < s_.size()) {
            skip_ws();
            skip_comment();
            if (pos_ < s_.size() && (s_[pos_] == '\n' || s_[pos_] == '\r')) {
                if (s_[pos_] == '\n') ++line_;
                ++pos_;
                continue;
            }
            break;
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_array_space() {
        while (pos_ < s_.size()) {
            const char c = s_[pos_];
            if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (c == '#') {
                skip_comment();
            } else {
                break;
            }
        }
    }

    void end_of_line() {
        skip_ws();
        skip_comment();
        if (pos_ < s_.size() && s_[pos_] == '\r') ++pos_;
        if (pos_ < s_.size()) {
            if (s_[pos_] != '\n') fail("unexpected trailing characters");
            ++pos_;
            ++line_;
        }
    }

    void expect(char c) {
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    static bool bare_char(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
    }

    std::string dotted_key() {
        std::string key;
        while (true) {
            const std::size_t start = pos_;
            while (pos_ < s_.size() && bare_char(s_[pos_])) ++pos_;
            if (pos_ == start) fail("expected a key");
            key += s_.substr(start, pos_ - start);
            skip_ws();
            if (pos_ < s_.size() && s_[pos_] == '.') {
                ++pos_;
                skip_ws();
                key += '.';
                continue;
            }
            return key;
        }
    }

    Value parse_value() {
        if (pos_ >= s_.size()) fail("missing value");
        const char c = s_[pos_];
        if (c == '"') return {parse_string()};
        if (c == '[') return {parse_array()};
        if (s_.compare(pos_, 4, "true") == 0) {
            pos_ += 4;
            return {true};
        }
        if (s_.compare(pos_, 5, "false") == 0) {
            pos_ += 5;
            return {false};
        }
        return parse_number();
    }

    std::string parse_string() {
        expect('"');
        std::string out;
        while (true) {
            if (pos_ >= s_.size() || s_[pos_] == '\n') fail("unterminated string");
            const char c = s_[pos_++];
            if (c == '"') return out;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (pos_ >= s_.size()) fail("unterminated escape");
            switch (s_[pos_++]) {
                case '"': out += '"'; break;
                case '\\': out += '\\'; break;
                case 'n': out += '\n'; break;
                case 't': out += '\t'; break;
                default: fail("unsupported escape sequence");
            }
        }
    }

    Array parse_array() {
        expect('[');
        Array out;
        while (true) {
            skip_array_space();
            if (pos_ < s_.size() && s_[pos_] == ']') {
                ++pos_;
                return out;
            }
            out.push_back(parse_value());
            skip_array_space();
            if (pos_ < s_.size() && s_[pos_] == ',') {
                ++pos_;
                continue;
            }
            skip_array_space();
            expect(']');
            return out;
        }
    }

    Value parse_number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '+' ||
                                    s_[pos_] == '-' || s_[pos_] == '.' || s_[pos_] == '_')) {
            ++pos_;
        }
        std::string tok;
        for (std::size_t i = start; i < pos_; ++i) {
            if (s_[i] != '_') tok += s_[i];
        }
        if (tok.empty()) fail("expected a value");
        const bool is_float = tok.find_first_of(".eE") != std::string::npos;
        const char* first = tok.data() + (tok[0] == '+' ? 1 : 0);
        const char* last = tok.data() + tok.size();
        if (is_float) {
            double d = 0.0;
            auto [p, ec] = std::from_chars(first, last, d);
            if (ec != std::errc() || p != last) fail("malformed float '" + tok + "'");
            return {d};
        }
        std::int64_t i = 0;
        auto [p, ec] = std::from_chars(first, last, i);
        if (ec != std::errc() || p != last) fail("malformed value '" + tok + "'");
        return {i};
    }

    const std::string& s_;
    std::string source_;
    std::size_t pos_ = 0;
    int line_ = 1;
};

}  // namespace detail

inline Table parse(const std::string& text, const std::string& source = "config") {
    return detail::Parser(text, source).parse();
}

}  // namespace distill::toml
