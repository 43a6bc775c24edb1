#pragma once

// Artifact plumbing: run-config files, NDJSON trajectories, CSV tables,
// binary snapshots, and content hashing for the run manifest.
//
// Two invariants govern every writer here:
//
//   * determinism -- numbers are emitted as shortest round-trip decimals
//     (std::to_chars), object keys are sorted, and no writer consults the
//     clock or the locale, so identical inputs give identical bytes;
//   * finiteness -- a non-finite value reaching any writer is a
//     NumericalError, never a "nan" token in an artifact.
//
// The config grammar is deliberately small: `[section]` headers, `key =
// value` lines, `#` comments.  Keys may repeat only where a consumer asks
// for a list; scalar getters treat repetition as an error, and a schema
// check rejects unknown sections/keys outright so misspellings cannot
// silently fall back to defaults.

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "dynamics.hpp"
#include "errors.hpp"
#include "fields.hpp"
#include "norms.hpp"
#include "stochastic.hpp"

namespace hspe::io {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// number formatting

/// Shortest decimal that parses back to exactly x.  Non-finite input is a
/// NumericalError: artifacts must never contain nan/inf tokens.
inline std::string fmt(double x) {
    if (!std::isfinite(x)) throw NumericalError("non-finite number reached an artifact writer");
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

/// Finiteness gate for values headed into a json tree.
inline json jnum(double x) {
    if (!std::isfinite(x)) throw NumericalError("non-finite number reached an artifact writer");
    return json(x);
}

// ---------------------------------------------------------------------------
// content hashing (FNV-1a, 64-bit)

inline constexpr uint64_t fnv1a64_seed = 0xcbf29ce484222325ULL;

inline uint64_t fnv1a64(std::string_view bytes, uint64_t h = fnv1a64_seed) {
    for (unsigned char c : bytes) {
        h ^= static_cast<uint64_t>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<size_t>(i)] = digits[h & 0xf];
        h >>= 4;
    }
    return out;
}

inline uint64_t fnv1a64_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ValidationError("cannot read file for hashing: " + p.string());
    uint64_t h = fnv1a64_seed;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv1a64(std::string_view(buf, static_cast<size_t>(in.gcount())), h);
    return h;
}

// ---------------------------------------------------------------------------
// config files

struct ConfigEntry {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;  // 1-based source line; 0 for programmatic entries
};

namespace detail {

inline std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

[[noreturn]] inline void config_fail(int line, const std::string& what) {
    throw ValidationError("config line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

/// Parsed key = value file.  Entries keep file order and duplicates; the
/// scalar getters reject duplicates so only list-valued keys may repeat.
class Config {
  public:
    Config() = default;

    static Config parse(const std::string& text) {
        Config cfg;
        std::string section;
        int line_no = 0;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            const std::string t = detail::trim(line);
            if (t.empty()) continue;
            if (t.front() == '[') {
                if (t.back() != ']') detail::config_fail(line_no, "unterminated section header");
                section = detail::trim(std::string_view(t).substr(1, t.size() - 2));
                if (!detail::valid_name(section))
                    detail::config_fail(line_no, "bad section name '" + section + "'");
                cfg.section_lines_.emplace(section, line_no);
                continue;
            }
            const size_t eq = t.find('=');
            if (eq == std::string::npos)
                detail::config_fail(line_no, "expected 'key = value' or '[section]'");
            const std::string key = detail::trim(std::string_view(t).substr(0, eq));
            const std::string value = detail::trim(std::string_view(t).substr(eq + 1));
            if (!detail::valid_name(key)) detail::config_fail(line_no, "bad key '" + key + "'");
            if (value.empty()) detail::config_fail(line_no, "empty value for key '" + key + "'");
            if (section.empty())
                detail::config_fail(line_no, "key '" + key + "' appears before any [section]");
            cfg.entries_.push_back(ConfigEntry{section, key, value, line_no});
        }
        return cfg;
    }

    static Config load(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        if (!in) throw ValidationError("cannot read config file: " + p.string());
        std::ostringstream buf;
        buf << in.rdbuf();
        return parse(buf.str());
    }

    const std::vector<ConfigEntry>& entries() const { return entries_; }

    bool has_section(const std::string& sec) const {
        if (section_lines_.count(sec)) return true;
        for (const auto& e : entries_)
            if (e.section == sec) return true;
        return false;
    }

    bool has(const std::string& sec, const std::string& key) const {
        for (const auto& e : entries_)
            if (e.section == sec && e.key == key) return true;
        return false;
    }

    /// All values for a (possibly repeated) key, in file order.
    std::vector<std::string> get_list(const std::string& sec, const std::string& key) const {
        std::vector<std::string> out;
        for (const auto& e : entries_)
            if (e.section == sec && e.key == key) out.push_back(e.value);
        return out;
    }

    std::string get_string(const std::string& sec, const std::string& key) const {
        auto vals = get_list(sec, key);
        if (vals.empty()) throw ValidationError("config: missing required key " + sec + "." + key);
        if (vals.size() > 1)
            throw ValidationError("config: key " + sec + "." + key + " given more than once");
        return vals.front();
    }

    std::string get_string(const std::string& sec, const std::string& key,
                           const std::string& def) const {
        return has(sec, key) ? get_string(sec, key) : def;
    }

    double get_double(const std::string& sec, const std::string& key) const {
        return parse_double(sec, key, get_string(sec, key));
    }
    double get_double(const std::string& sec, const std::string& key, double def) const {
        return has(sec, key) ? get_double(sec, key) : def;
    }

    int get_int(const std::string& sec, const std::string& key) const {
        const std::string v = get_string(sec, key);
        int out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ValidationError("config: " + sec + "." + key + " is not an integer: '" + v + "'");
        return out;
    }
    int get_int(const std::string& sec, const std::string& key, int def) const {
        return has(sec, key) ? get_int(sec, key) : def;
    }

    uint64_t get_u64(const std::string& sec, const std::string& key) const {
        const std::string v = get_string(sec, key);
        uint64_t out = 0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ValidationError("config: " + sec + "." + key +
                                  " is not a nonnegative integer: '" + v + "'");
        return out;
    }
    uint64_t get_u64(const std::string& sec, const std::string& key, uint64_t def) const {
        return has(sec, key) ? get_u64(sec, key) : def;
    }

    bool get_bool(const std::string& sec, const std::string& key) const {
        const std::string v = get_string(sec, key);
        if (v == "true" || v == "1" || v == "on") return true;
        if (v == "false" || v == "0" || v == "off") return false;
        throw ValidationError("config: " + sec + "." + key + " is not a boolean: '" + v + "'");
    }
    bool get_bool(const std::string& sec, const std::string& key, bool def) const {
        return has(sec, key) ? get_bool(sec, key) : def;
    }

    /// Whitespace-separated doubles from one value string.
    std::vector<double> get_doubles(const std::string& sec, const std::string& key) const {
        const std::string v = get_string(sec, key);
        std::vector<double> out;
        std::istringstream in(v);
        std::string tok;
        while (in >> tok) out.push_back(parse_double(sec, key, tok));
        if (out.empty()) throw ValidationError("config: " + sec + "." + key + " has no numbers");
        return out;
    }

    /// Replace every occurrence of sec.key with a single programmatic entry
    /// (appends when absent).  This is the override path, so last-one-wins.
    void set(const std::string& sec, const std::string& key, const std::string& value) {
        std::erase_if(entries_, [&](const ConfigEntry& e) { return e.section == sec && e.key == key; });
        entries_.push_back(ConfigEntry{sec, key, value, 0});
    }

    /// Sections as objects; repeated keys collapse into arrays (file order).
    json to_json() const {
        json out = json::object();
        for (const auto& e : entries_) {
            json& sec = out[e.section];
            if (!sec.contains(e.key)) {
                sec[e.key] = e.value;
            } else if (sec[e.key].is_array()) {
                sec[e.key].push_back(e.value);
            } else {
                json arr = json::array();
                arr.push_back(sec[e.key]);
                arr.push_back(e.value);
                sec[e.key] = arr;
            }
        }
        return out;
    }

  private:
    static double parse_double(const std::string& sec, const std::string& key,
                               const std::string& v) {
        double out = 0.0;
        const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
        if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
            throw ValidationError("config: " + sec + "." + key + " is not a number: '" + v + "'");
        if (!std::isfinite(out))
            throw ValidationError("config: " + sec + "." + key + " must be finite");
        return out;
    }

    std::vector<ConfigEntry> entries_;
    std::multimap<std::string, int> section_lines_;
};

/// "section.key=value" (the --override grammar).
inline void apply_override(Config& cfg, const std::string& spec) {
    const size_t eq = spec.find('=');
    const size_t dot = spec.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw ValidationError("override must look like section.key=value: '" + spec + "'");
    const std::string sec = detail::trim(std::string_view(spec).substr(0, dot));
    const std::string key = detail::trim(std::string_view(spec).substr(dot + 1, eq - dot - 1));
    const std::string value = detail::trim(std::string_view(spec).substr(eq + 1));
    if (!detail::valid_name(sec) || !detail::valid_name(key) || value.empty())
        throw ValidationError("override must look like section.key=value: '" + spec + "'");
    cfg.set(sec, key, value);
}

/// Allowed/required shape of a config file.  check() rejects unknown
/// sections and keys (misspellings must not become silent defaults) and
/// demands the required ones.
struct ConfigSchema {
    std::map<std::string, std::set<std::string>> allowed;   // section -> keys
    std::map<std::string, std::set<std::string>> required;  // section -> keys that must appear
    std::set<std::string> required_sections;

    void check(const Config& cfg) const {
        for (const auto& e : cfg.entries()) {
            const auto sec = allowed.find(e.section);
            if (sec == allowed.end())
                throw ValidationError("config: unknown section [" + e.section + "] (line " +
                                      std::to_string(e.line) + ")");
            if (!sec->second.count(e.key))
                throw ValidationError("config: unknown key " + e.section + "." + e.key +
                                      " (line " + std::to_string(e.line) + ")");
        }
        for (const auto& sec : required_sections)
            if (!cfg.has_section(sec))
                throw ValidationError("config: missing required section [" + sec + "]");
        for (const auto& [sec, keys] : required)
            for (const auto& key : keys)
                if (!cfg.has(sec, key))
                    throw ValidationError("config: missing required key " + sec + "." + key);
    }
};

// ---------------------------------------------------------------------------
// NDJSON trajectory records

inline json norm_to_json(const NormReport& r) {
    json out;
    out["kind"] = to_string(r.kind);
    out["s"] = r.s;
    out["value"] = jnum(r.value);
    out["weight_mode"] = r.weight_mode;
    json comps = json::object();
    for (const auto& [name, v] : r.components) comps[name] = jnum(v);
    out["components"] = comps;
    return out;
}

inline json rayleigh_to_json(const RayleighReport& r) {
    json out;
    out["kappa"] = jnum(r.kappa);
    out["min"] = jnum(r.min_val);
    out["max"] = jnum(r.max_val);
    out["violated_fraction"] = jnum(r.violated_fraction);
    out["band"] = json{{"lo", jnum(r.band.lo)}, {"hi", jnum(r.band.hi)}};
    out["pass"] = r.pass;
    return out;
}

inline json stopping_to_json(const StoppingEvent& ev) {
    json out;
    out["time"] = jnum(ev.time);
    out["cause"] = to_string(ev.cause);
    out["value_at_trigger"] = jnum(ev.value_at_trigger);
    return out;
}

/// One object per recorded time, one line each.  An un-stepped record (T = 0)
/// writes nothing, so the artifact is an empty file.
inline void write_trajectory(std::ostream& os, const TrajectoryRecord& rec) {
    for (size_t i = 0; i < rec.size(); ++i) {
        json line;
        line["t"] = jnum(rec.times[i]);
        line["norm"] = norm_to_json(rec.norm_series[i]);
        line["dev"] = jnum(rec.dev_series[i]);
        line["theta_rho"] = jnum(rec.cutoff_series[i].first);
        line["theta_kappa"] = jnum(rec.cutoff_series[i].second);
        line["rayleigh"] = rayleigh_to_json(rec.rayleigh_series[i]);
        os << line.dump() << '\n';
    }
}

// ---------------------------------------------------------------------------
// CSV tables

/// Header + rows; numeric rows are formatted through fmt so the finiteness
/// and round-trip rules apply.  Cells are quoted per the usual CSV rules.
class CsvTable {
  public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {
        if (header_.empty()) throw ValidationError("csv table needs at least one column");
    }

    void add_row(const std::vector<double>& vals) {
        std::vector<std::string> cells;
        cells.reserve(vals.size());
        for (double v : vals) cells.push_back(fmt(v));
        add_cells(std::move(cells));
    }

    void add_cells(std::vector<std::string> cells) {
        if (cells.size() != header_.size())
            throw ValidationError("csv row has " + std::to_string(cells.size()) +
                                  " cells, header has " + std::to_string(header_.size()));
        rows_.push_back(std::move(cells));
    }

    size_t rows() const { return rows_.size(); }

    void write(std::ostream& os) const {
        write_line(os, header_);
        for (const auto& r : rows_) write_line(os, r);
    }

  private:
    static void write_line(std::ostream& os, const std::vector<std::string>& cells) {
        for (size_t i = 0; i < cells.size(); ++i) {
            if (i) os << ',';
            os << quoted(cells[i]);
        }
        os << '\n';
    }

    static std::string quoted(const std::string& cell) {
        if (cell.find_first_of(",\"\n\r") == std::string::npos) return cell;
        std::string out = "\"";
        for (char c : cell) {
            if (c == '"') out += '"';
            out += c;
        }
        out += '"';
        return out;
    }

    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

// ---------------------------------------------------------------------------
// binary snapshots

/// Layout: one JSON header line, then nx*nz doubles, little-endian, x-major
/// (value at grid point (ix, iz) sits at index ix*nz + iz).
struct Snapshot {
    GridShape grid;
    double time = 0.0;
    std::string field;
    std::vector<double> values;
};

namespace detail {

inline void put_f64le(std::ostream& os, double x) {
    if (!std::isfinite(x)) throw NumericalError("non-finite number reached an artifact writer");
    const uint64_t b = std::bit_cast<uint64_t>(x);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((b >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

inline double get_f64le(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    if (is.gcount() != 8) throw ValidationError("snapshot truncated");
    uint64_t b = 0;
    for (int i = 7; i >= 0; --i) b = (b << 8) | static_cast<unsigned char>(buf[i]);
    return std::bit_cast<double>(b);
}

}  // namespace detail

inline void write_snapshot(std::ostream& os, const VelocityState& st,
                           const std::string& field = "u") {
    const PhysicalField phys = inverse_transform(st.u());
    json header;
    header["format"] = "hspe-snapshot";
    header["version"] = 1;
    header["field"] = field;
    header["time"] = jnum(st.time());
    header["nx"] = st.grid().nx;
    header["nz"] = st.grid().nz;
    header["layout"] = "x-major";
    header["encoding"] = "f64le";
    os << header.dump() << '\n';
    for (double v : phys.values()) detail::put_f64le(os, v);
}

inline Snapshot read_snapshot(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ValidationError("snapshot has no header line");
    json header = json::parse(line, nullptr, false);
    if (header.is_discarded() || header.value("format", "") != std::string("hspe-snapshot") ||
        header.value("version", 0) != 1)
        throw ValidationError("snapshot header is not hspe-snapshot v1");
    Snapshot snap;
    snap.grid = GridShape{header.at("nx").get<int>(), header.at("nz").get<int>()};
    validate_grid(snap.grid);
    snap.time = header.at("time").get<double>();
    snap.field = header.at("field").get<std::string>();
    snap.values.resize(snap.grid.size());
    for (double& v : snap.values) v = detail::get_f64le(is);
    return snap;
}

// ---------------------------------------------------------------------------
// manifest helpers

/// Compact fingerprint of a noise model: the scalars plus per-mode L2 masses,
/// enough to verify that a replay rebuilt the same operator without dumping
/// every coefficient.
inline json noise_descriptor(const NoiseModel& m) {
    json out;
    out["k"] = m.K();
    out["smooth_order"] = m.smooth_order();
    out["kappa1"] = jnum(m.kappa1());
    out["kappa2"] = jnum(m.kappa2());
    json modes = json::array();
    for (int k = 0; k < m.K(); ++k) {
        const auto idx = static_cast<size_t>(k);
        modes.push_back(json{{"psi_l2", jnum(l2_norm(m.psi()[idx]))},
                             {"chi_l2", jnum(l2_norm(m.chi()[idx]))}});
    }
    out["modes"] = modes;
    return out;
}

/// Single funnel for file output: parent directories are created, the bytes
/// are written whole, and the FNV-1a hash of what went out is returned so the
/// manifest can record it.
inline uint64_t write_file(const std::filesystem::path& p, const std::string& bytes) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open output file: " + p.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw ValidationError("short write to output file: " + p.string());
    return fnv1a64(bytes);
}

inline uint64_t write_json_file(const std::filesystem::path& p, const json& j) {
    return write_file(p, j.dump(2) + "\n");
}

}  // namespace hspe::io
