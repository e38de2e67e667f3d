#include "replica_cs/harness/records.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <json.hpp>

namespace replica_cs::harness {

namespace {

std::string jkey(const char* stem, int j) {
    return std::string(stem) + "_" + std::to_string(j + 1);
}

std::string cell(const Value& v) {
    struct Visitor {
        std::string operator()(double d) const { return format_double(d); }
        std::string operator()(std::int64_t i) const { return std::to_string(i); }
        std::string operator()(bool b) const { return b ? "true" : "false"; }
        std::string operator()(const std::string& s) const {
            if (s.find_first_of(",\"\n\r") == std::string::npos) {
                return s;
            }
            std::string q = "\"";
            for (char c : s) {
                q += c == '"' ? std::string("\"\"") : std::string(1, c);
            }
            return q + "\"";
        }
    };
    return std::visit(Visitor{}, v);
}

} // namespace

std::optional<double> ResultRecord::number(const std::string& key) const {
    const auto it = fields.find(key);
    if (it == fields.end()) {
        return std::nullopt;
    }
    if (const auto* d = std::get_if<double>(&it->second)) {
        return *d;
    }
    if (const auto* i = std::get_if<std::int64_t>(&it->second)) {
        return static_cast<double>(*i);
    }
    return std::nullopt;
}

std::optional<std::string> ResultRecord::text(const std::string& key) const {
    const auto it = fields.find(key);
    if (it == fields.end()) {
        return std::nullopt;
    }
    if (const auto* s = std::get_if<std::string>(&it->second)) {
        return *s;
    }
    return cell(it->second);
}

std::optional<bool> ResultRecord::flag(const std::string& key) const {
    const auto it = fields.find(key);
    if (it == fields.end()) {
        return std::nullopt;
    }
    if (const auto* b = std::get_if<bool>(&it->second)) {
        return *b;
    }
    return std::nullopt;
}

std::string format_double(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<std::string> record_header(const ExperimentConfig& cfg) {
    const int jn = cfg.size();
    std::vector<std::string> h{"mode", "point", "status", "reason", "J"};
    for (const char* stem : {"rho", "lambda", "sigma2", "mu"}) {
        for (int j = 0; j < jn; ++j) {
            h.push_back(jkey(stem, j));
        }
    }
    for (const char* k : {"mu_c", "mu_0", "reg_kind", "reg_weight", "reg_p", "reg_q", "reg_phi", "reg_alpha",
                          "reg_domain", "reg_B", "distortion"}) {
        h.emplace_back(k);
    }
    const auto per_terminal = [&](std::initializer_list<const char*> stems) {
        for (const char* stem : stems) {
            for (int j = 0; j < jn; ++j) {
                h.push_back(jkey(stem, j));
            }
        }
    };
    const auto tuned = [&](const char* prefix) {
        for (const auto& f : cfg.tune.free) {
            h.push_back(prefix + f.name);
        }
    };

    switch (cfg.mode) {
    case Mode::predict:
        h.insert(h.end(), {"D_rs", "converged", "iterations", "residual"});
        per_terminal({"q", "chi", "tau", "xi2"});
        break;
    case Mode::simulate:
        h.insert(h.end(), {"N", "trials", "trials_failed", "trials_unconverged", "D_mc", "D_mc_se", "D_rs",
                           "rs_converged", "rel_gap"});
        break;
    case Mode::sweep_region:
        h.insert(h.end(), {"threshold", "D_min", "in_region", "on_frontier"});
        tuned("tuned_");
        h.insert(h.end(), {"evaluations", "failures"});
        per_terminal({"tau", "xi2"});
        if (cfg.sweep.baseline_l1) {
            h.insert(h.end(), {"D_individual", "in_region_individual", "on_frontier_individual"});
            per_terminal({"individual_lambda"});
        }
        break;
    case Mode::tune:
        h.insert(h.end(), {"snr_db", "power", "D_star"});
        tuned("tuned_");
        h.insert(h.end(), {"evaluations", "failures"});
        per_terminal({"tau", "xi2"});
        break;
    case Mode::spectrum:
        h.insert(h.end(), {"terminal", "x", "cdf_empirical", "cdf_law", "mean_empirical", "second_moment_empirical",
                           "mean_law", "second_moment_law", "kolmogorov"});
        break;
    }
    h.insert(h.end(), {"seed", "config_hash", "version", "header_version"});
    return h;
}

std::string format_csv(const std::vector<ResultRecord>& records, const std::vector<std::string>& header) {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) {
        out += (i ? "," : "") + header[i];
    }
    out += '\n';
    for (const auto& r : records) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i) {
                out += ',';
            }
            if (const auto it = r.fields.find(header[i]); it != r.fields.end()) {
                out += cell(it->second);
            }
        }
        out += '\n';
    }
    return out;
}

std::string format_json_lines(const std::vector<ResultRecord>& records, const std::vector<std::string>& header) {
    using ordered = nlohmann::ordered_json;
    std::string out;
    for (const auto& r : records) {
        ordered obj = ordered::object();
        for (const auto& key : header) {
            const auto it = r.fields.find(key);
            if (it == r.fields.end()) {
                continue;
            }
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, double>) {
                        // JSON has no inf/nan; keep them as strings
                        obj[key] = std::isfinite(v) ? ordered(v) : ordered(format_double(v));
                    } else {
                        obj[key] = v;
                    }
                },
                it->second);
        }
        out += obj.dump() + '\n';
    }
    return out;
}

void write_file_atomic(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    if (target.has_parent_path()) {
        fs::create_directories(target.parent_path());
    }
    fs::path tmp = target;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
        }
        out << content;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp);
            throw std::runtime_error("write to '" + tmp.string() + "' failed");
        }
    }
    fs::rename(tmp, target);
}

void write_records(const std::vector<ResultRecord>& records, const std::vector<std::string>& header,
                   const OutputConfig& output) {
    const std::set<std::string> known(header.begin(), header.end());
    for (const auto& r : records) {
        for (const auto& [k, v] : r.fields) {
            if (!known.count(k)) {
                throw ParameterError("record field '" + k + "' is not in the header");
            }
        }
    }
    const std::string text = output.format == OutputFormat::csv ? format_csv(records, header)
                                                                : format_json_lines(records, header);
    if (output.path.empty() || output.path == "-") {
        std::fwrite(text.data(), 1, text.size(), stdout);
        std::fflush(stdout);
    } else {
        write_file_atomic(output.path, text);
    }
}

} // namespace replica_cs::harness
