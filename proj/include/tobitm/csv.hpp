#pragma once

// CSV ingestion with explicit column roles, and the matching writer.
// Format: header row, comma separator, '.' decimal point, optional double
// quotes around fields. Empty, "NA" and "." cells count as missing.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tobitm/core_data.hpp"
#include "tobitm/error.hpp"

namespace tobitm {

struct ColumnRoles {
    std::string response;
    std::vector<std::string> exogenous;  // intercept is added automatically
    std::string endogenous;
    std::string instrument;

    void validate() const {
        static const std::string mod = "cli-io";
        if (response.empty()) throw invalid_input(mod, "response column not specified");
        if (endogenous.empty()) throw invalid_input(mod, "endogenous column not specified");
        if (instrument.empty()) throw invalid_input(mod, "instrument column not specified");
        std::vector<std::string> all{response, endogenous, instrument};
        all.insert(all.end(), exogenous.begin(), exogenous.end());
        for (std::size_t a = 0; a < all.size(); ++a)
            for (std::size_t b = a + 1; b < all.size(); ++b)
                if (all[a] == all[b])
                    throw invalid_input(mod, "column '" + all[a] + "' is assigned more than one role");
    }
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(std::move(cur));
    for (auto& s : out) {
        const auto b = s.find_first_not_of(" \t");
        const auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    }
    return out;
}

inline bool is_missing(const std::string& cell) { return cell.empty() || cell == "NA" || cell == "." || cell == "NaN"; }

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

inline Dataset read_csv(std::istream& in, const ColumnRoles& roles, double threshold = 0.0,
                        const std::string& source = "<stream>") {
    static const std::string mod = "cli-io";
    roles.validate();

    std::string line;
    if (!std::getline(in, line) || line.find_first_not_of(" \t\r") == std::string::npos)
        throw invalid_input(mod, source + ": empty file (no header row)");
    const auto header = detail::split_csv_line(line);
    std::unordered_map<std::string, std::size_t> col;
    for (std::size_t j = 0; j < header.size(); ++j) col.emplace(header[j], j);

    auto index_of = [&](const std::string& name, const char* role) {
        const auto it = col.find(name);
        if (it == col.end())
            throw invalid_input(mod, source + ": missing " + std::string(role) + " column '" + name + "'");
        return it->second;
    };
    const std::size_t iy = index_of(roles.response, "response");
    const std::size_t iw = index_of(roles.endogenous, "endogenous");
    const std::size_t iz = index_of(roles.instrument, "instrument");
    std::vector<std::size_t> ix;
    for (const auto& name : roles.exogenous) ix.push_back(index_of(name, "exogenous"));

    std::vector<double> y, w, z;
    std::vector<std::vector<double>> xs(ix.size());
    std::vector<std::size_t> missing_rows;
    std::size_t line_no = 1;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw invalid_input(mod, source + ": line " + std::to_string(line_no) + " has " +
                                         std::to_string(cells.size()) + " fields, header has " +
                                         std::to_string(header.size()));
        bool missing = false;
        auto parse = [&](std::size_t j) {
            const std::string& cell = cells[j];
            if (detail::is_missing(cell)) {
                missing = true;
                return 0.0;
            }
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != cell.size() || !std::isfinite(v))
                throw invalid_input(mod, source + ": unparsable value '" + cell + "' at row " + std::to_string(row) +
                                             " (line " + std::to_string(line_no) + "), column '" + header[j] + "'");
            return v;
        };
        y.push_back(parse(iy));
        w.push_back(parse(iw));
        z.push_back(parse(iz));
        for (std::size_t k = 0; k < ix.size(); ++k) xs[k].push_back(parse(ix[k]));
        if (missing) missing_rows.push_back(row);
        ++row;
    }
    if (row == 0) throw invalid_input(mod, source + ": no data rows");
    if (!missing_rows.empty()) {
        std::string msg = source + ": missing values in role columns at rows";
        for (std::size_t k = 0; k < missing_rows.size() && k < 20; ++k) msg += " " + std::to_string(missing_rows[k]);
        if (missing_rows.size() > 20) msg += " ... (" + std::to_string(missing_rows.size()) + " rows)";
        throw invalid_input(mod, msg);
    }

    const auto n = static_cast<Eigen::Index>(row);
    Matrix x(n, static_cast<Eigen::Index>(ix.size()) + 1);
    x.col(0).setOnes();
    for (std::size_t k = 0; k < ix.size(); ++k)
        x.col(static_cast<Eigen::Index>(k) + 1) = Eigen::Map<const Vector>(xs[k].data(), n);
    ColumnNames names{roles.response, roles.exogenous, roles.endogenous, roles.instrument};
    return Dataset::from_columns(Eigen::Map<const Vector>(y.data(), n), std::move(x),
                                 Eigen::Map<const Vector>(w.data(), n), Eigen::Map<const Vector>(z.data(), n),
                                 threshold, InterceptPolicy::require, std::move(names));
}

inline Dataset read_csv(const std::string& path, const ColumnRoles& roles, double threshold = 0.0) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cli-io", "cannot open '" + path + "'");
    return read_csv(in, roles, threshold, path);
}

// Writes response, exogenous (without the intercept), endogenous and
// instrument columns with round-trip precision.
inline void write_csv(std::ostream& out, const Dataset& ds) {
    const auto& nm = ds.names();
    out << nm.response;
    for (const auto& e : nm.exogenous) out << ',' << e;
    out << ',' << nm.endogenous << ',' << nm.instrument << '\n';
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        out << detail::format_double(ds.y()[i]);
        for (Eigen::Index j = 1; j < ds.p(); ++j) out << ',' << detail::format_double(ds.x_exo()(i, j));
        out << ',' << detail::format_double(ds.w()[i]) << ',' << detail::format_double(ds.z1()[i]) << '\n';
    }
}

inline void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw invalid_input("cli-io", "cannot write '" + path + "'");
    write_csv(out, ds);
}

inline ColumnRoles roles_of(const Dataset& ds) {
    const auto& nm = ds.names();
    return {nm.response, nm.exogenous, nm.endogenous, nm.instrument};
}

// Rescales the data: every regressor (non-intercept exogenous columns,
// endogenous, instrument) to zero mean and unit sample variance, and the
// response to c + (y - c) / sd(y) so the threshold and censoring pattern
// are unchanged.
inline Dataset standardized(const Dataset& ds) {
    auto zscore = [](const Vector& v) -> Vector {
        const double m = v.mean();
        const double var = v.size() > 1 ? (v.array() - m).square().sum() / static_cast<double>(v.size() - 1) : 0.0;
        if (!(var > 0.0)) throw invalid_input("cli-io", "cannot standardize a constant column");
        return ((v.array() - m) / std::sqrt(var)).matrix();
    };
    Matrix x = ds.x_exo();
    for (Eigen::Index j = 1; j < x.cols(); ++j) x.col(j) = zscore(x.col(j));
    const double c = ds.threshold();
    const Vector yc = (ds.y().array() - c).matrix();
    const double ym = ds.y().mean();
    const double yvar = ds.n() > 1 ? (ds.y().array() - ym).square().sum() / static_cast<double>(ds.n() - 1) : 0.0;
    if (!(yvar > 0.0)) throw invalid_input("cli-io", "cannot standardize a constant response");
    Vector y = (yc.array() / std::sqrt(yvar) + c).matrix();
    // Censored rows must stay exactly at c.
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (ds.y()[i] == c) y[i] = c;
    return Dataset::from_columns(std::move(y), std::move(x), zscore(ds.w()), zscore(ds.z1()), c,
                                 InterceptPolicy::require, ds.names());
}

}  // namespace tobitm
