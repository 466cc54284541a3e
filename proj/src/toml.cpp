#include "ktl/toml.hpp"

#include <cctype>
#include <cmath>
#include <cerrno>
#include <cstdlib>
#include <limits>
#include <set>

#include "ktl/errors.hpp"
#include "ktl/format.hpp"

namespace ktl {

namespace {

using json = nlohmann::ordered_json;

class Parser {
public:
    explicit Parser(const std::string& s) : s_(s) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_ws_nl();
            if (eof()) break;
            if (peek() == '[') {
                ++i_;
                if (peek() == '[') fail("arrays of tables are not supported");
                skip_ws();
                auto path = key_path();
                skip_ws();
                expect(']');
                end_of_line();
                table = &root;
                for (const auto& k : path) {
                    json& next = (*table)[k];
                    if (next.is_null()) next = json::object();
                    else if (!next.is_object()) fail("key '" + k + "' is not a table");
                    table = &next;
                }
                if (!defined_.insert(joined(path)).second) fail("table [" + joined(path) + "] defined twice");
                continue;
            }
            key_value(*table);
            end_of_line();
        }
        return root;
    }

private:
    const std::string& s_;
    std::size_t i_ = 0;
    std::set<std::string> defined_;

    bool eof() const { return i_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[i_]; }

    int line() const {
        int n = 1;
        for (std::size_t j = 0; j < i_ && j < s_.size(); ++j) n += s_[j] == '\n';
        return n;
    }
    [[noreturn]] void fail(const std::string& msg) const {
        throw InputError("config line " + std::to_string(line()) + ": " + msg);
    }
    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        ++i_;
    }
    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t')) ++i_;
    }
    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') ++i_;
    }
    void skip_ws_nl() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() == '\n' || peek() == '\r') ++i_;
            else break;
        }
    }
    void end_of_line() {
        skip_ws();
        skip_comment();
        if (peek() == '\r') ++i_;
        if (!eof() && peek() != '\n') fail("unexpected text after value");
    }
    static std::string joined(const std::vector<std::string>& p) {
        std::string r;
        for (std::size_t j = 0; j < p.size(); ++j) r += (j ? "." : "") + p[j];
        return r;
    }

    std::string simple_key() {
        if (peek() == '"') return basic_string();
        if (peek() == '\'') return literal_string();
        std::string k;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_' || peek() == '-'))
            k += s_[i_++];
        if (k.empty()) fail("expected a key");
        return k;
    }
    std::vector<std::string> key_path() {
        std::vector<std::string> p{simple_key()};
        skip_ws();
        while (peek() == '.') {
            ++i_;
            skip_ws();
            p.push_back(simple_key());
            skip_ws();
        }
        return p;
    }

    void key_value(json& table) {
        auto path = key_path();
        skip_ws();
        expect('=');
        skip_ws();
        json v = value();
        json* t = &table;
        for (std::size_t j = 0; j + 1 < path.size(); ++j) {
            json& next = (*t)[path[j]];
            if (next.is_null()) next = json::object();
            else if (!next.is_object()) fail("key '" + path[j] + "' is not a table");
            t = &next;
        }
        if (t->contains(path.back())) fail("duplicate key '" + joined(path) + "'");
        (*t)[path.back()] = std::move(v);
    }

    std::string basic_string() {
        expect('"');
        std::string r;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = s_[i_++];
            if (c == '"') break;
            if (c != '\\') {
                r += c;
                continue;
            }
            char e = s_[i_++];
            switch (e) {
                case '"': r += '"'; break;
                case '\\': r += '\\'; break;
                case 'n': r += '\n'; break;
                case 't': r += '\t'; break;
                case 'r': r += '\r'; break;
                default: fail(std::string("unsupported escape \\") + e);
            }
        }
        return r;
    }
    std::string literal_string() {
        expect('\'');
        std::string r;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            char c = s_[i_++];
            if (c == '\'') break;
            r += c;
        }
        return r;
    }

    json value() {
        const char c = peek();
        if (c == '"') return basic_string();
        if (c == '\'') return literal_string();
        if (c == '[') return array();
        if (c == '{') return inline_table();
        if (s_.compare(i_, 4, "true") == 0) {
            i_ += 4;
            return true;
        }
        if (s_.compare(i_, 5, "false") == 0) {
            i_ += 5;
            return false;
        }
        return number();
    }

    json array() {
        expect('[');
        json a = json::array();
        while (true) {
            skip_ws_nl();
            if (peek() == ']') {
                ++i_;
                return a;
            }
            a.push_back(value());
            skip_ws_nl();
            if (peek() == ',') {
                ++i_;
                continue;
            }
            skip_ws_nl();
            expect(']');
            return a;
        }
    }

    json inline_table() {
        expect('{');
        json t = json::object();
        skip_ws();
        if (peek() == '}') {
            ++i_;
            return t;
        }
        while (true) {
            skip_ws();
            key_value(t);
            skip_ws();
            if (peek() == ',') {
                ++i_;
                continue;
            }
            expect('}');
            return t;
        }
    }

    json number() {
        std::string tok;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                          peek() == '.' || peek() == '_'))
            tok += s_[i_++];
        if (tok.empty()) fail("expected a value");
        std::string t;
        for (char c : tok)
            if (c != '_') t += c;
        std::string body = t;
        bool neg = false;
        if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
            neg = body[0] == '-';
            body = body.substr(1);
        }
        if (body == "inf") return neg ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::infinity();
        if (body == "nan") return std::numeric_limits<double>::quiet_NaN();
        const bool is_float = t.find_first_of(".eE") != std::string::npos;
        char* end = nullptr;
        errno = 0;
        if (!is_float) {
            const long long v = std::strtoll(t.c_str(), &end, 10);
            if (*end || errno) fail("invalid integer '" + tok + "'");
            if (v < 0) return v;
            return static_cast<std::uint64_t>(std::strtoull(t.c_str(), &end, 10));
        }
        const double v = std::strtod(t.c_str(), &end);
        if (*end) fail("invalid number '" + tok + "'");
        return v;
    }
};

std::string quote(const std::string& s) {
    std::string r = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') r += '\\', r += c;
        else if (c == '\n') r += "\\n";
        else if (c == '\t') r += "\\t";
        else r += c;
    }
    return r + "\"";
}

bool bare(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
    return true;
}

std::string key_text(const std::string& k) { return bare(k) ? k : quote(k); }

std::string scalar(const json& v);

std::string inline_value(const json& v) {
    if (v.is_array()) {
        std::string r = "[";
        for (std::size_t j = 0; j < v.size(); ++j) r += (j ? ", " : "") + inline_value(v[j]);
        return r + "]";
    }
    if (v.is_object()) {
        std::string r = "{";
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
            r += (first ? "" : ", ") + key_text(it.key()) + " = " + inline_value(it.value());
            first = false;
        }
        return r + "}";
    }
    return scalar(v);
}

std::string scalar(const json& v) {
    if (v.is_string()) return quote(v.get<std::string>());
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return v.dump();
    if (v.is_number_float()) {
        std::string s = num(v.get<double>());
        if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
        return s;
    }
    throw InputError("to_toml: null values cannot be written");
}

void emit_table(const json& t, const std::string& prefix, std::string& out) {
    for (auto it = t.begin(); it != t.end(); ++it)
        if (!it.value().is_object()) out += key_text(it.key()) + " = " + inline_value(it.value()) + "\n";
    for (auto it = t.begin(); it != t.end(); ++it) {
        if (!it.value().is_object()) continue;
        const std::string name = prefix.empty() ? key_text(it.key()) : prefix + "." + key_text(it.key());
        out += "\n[" + name + "]\n";
        emit_table(it.value(), name, out);
    }
}

} // namespace

json parse_toml(const std::string& text) { return Parser(text).parse(); }

std::string to_toml(const json& doc) {
    if (!doc.is_object()) throw InputError("to_toml: document must be an object");
    std::string out;
    emit_table(doc, "", out);
    return out;
}

} // namespace ktl
