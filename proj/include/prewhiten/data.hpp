#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "prewhiten/error.hpp"

namespace prewhiten {

/// T x V data matrix: rows are samples (volumes), columns are vertices.
struct BoldMatrix {
    Eigen::MatrixXd data;            // T x V
    double tr = 0.0;                 // seconds per sample
    std::vector<int> vertex_ids;     // V labels
    std::vector<int> constant_columns; // flagged, never dropped

    Eigen::Index T() const { return data.rows(); }
    Eigen::Index V() const { return data.cols(); }
};

struct SurfaceMesh {
    Eigen::MatrixXd coords;                  // V x 3, mm
    std::vector<std::array<int, 3>> faces;   // F triangles
    std::vector<char> boundary_mask;         // optional; 1 = excluded
    std::vector<int> isolated_vertices;      // filled at load/validation

    Eigen::Index V() const { return coords.rows(); }
    std::size_t F() const { return faces.size(); }
    bool masked(Eigen::Index v) const {
        return !boundary_mask.empty() && boundary_mask[static_cast<std::size_t>(v)];
    }
};

struct EventCondition {
    std::string name;
    std::vector<double> onsets;      // seconds
    std::vector<double> durations;   // seconds
    std::vector<double> amplitudes;  // default 1
};

struct EventSchedule {
    std::vector<EventCondition> conditions;
};

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
}

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_real(const std::string& s, const std::string& where) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw DataError("malformed number '" + s + "' at " + where);
    }
}

} // namespace detail

/// Validates a BoldMatrix in place: rejects non-finite entries, flags
/// constant columns. NaN/Inf errors name the 0-based cell (row,col).
inline void validate_bold(BoldMatrix& b) {
    if (b.T() < 2) throw DataError("BOLD matrix needs T >= 2 samples");
    if (b.V() < 1) throw DataError("BOLD matrix needs V >= 1 vertices");
    if (b.tr <= 0.0) throw DataError("BOLD matrix needs tr > 0");
    for (Eigen::Index j = 0; j < b.V(); ++j)
        for (Eigen::Index i = 0; i < b.T(); ++i)
            if (!std::isfinite(b.data(i, j)))
                throw DataError("non-finite value at cell (" + std::to_string(i) + "," +
                                std::to_string(j) + ")");
    b.constant_columns.clear();
    for (Eigen::Index j = 0; j < b.V(); ++j) {
        const double mean = b.data.col(j).mean();
        if ((b.data.col(j).array() - mean).abs().maxCoeff() == 0.0)
            b.constant_columns.push_back(static_cast<int>(j));
    }
    if (b.vertex_ids.empty()) {
        b.vertex_ids.resize(static_cast<std::size_t>(b.V()));
        for (Eigen::Index j = 0; j < b.V(); ++j)
            b.vertex_ids[static_cast<std::size_t>(j)] = static_cast<int>(j);
    }
}

/// Loads the dense matrix format: one header line `BOLD v1 <T> <V> <tr>`,
/// then T CSV rows (text) or T*V little-endian doubles row-major (.bmat).
/// tr_override > 0 replaces the header tr (CLI flag precedence, documented).
inline BoldMatrix load_bold(const std::string& path, double tr_override = 0.0) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open BOLD file: " + path);
    std::string header;
    if (!std::getline(in, header)) throw DataError("empty BOLD file: " + path);
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::istringstream hs(header);
    std::string magic, version;
    long long t_count = 0, v_count = 0;
    double tr = 0.0;
    if (!(hs >> magic >> version >> t_count >> v_count >> tr) || magic != "BOLD" || version != "v1")
        throw DataError("malformed BOLD header in " + path + ": '" + header + "'");
    if (t_count < 2 || v_count < 1)
        throw DataError("BOLD header declares T=" + std::to_string(t_count) + " V=" +
                        std::to_string(v_count));
    BoldMatrix b;
    b.tr = tr_override > 0.0 ? tr_override : tr;
    b.data.resize(t_count, v_count);
    if (detail::has_suffix(path, ".bmat")) {
        std::vector<double> row(static_cast<std::size_t>(v_count));
        for (long long i = 0; i < t_count; ++i) {
            in.read(reinterpret_cast<char*>(row.data()),
                    static_cast<std::streamsize>(sizeof(double) * row.size()));
            if (!in) throw DataError("short binary BOLD payload at row " + std::to_string(i));
            for (long long j = 0; j < v_count; ++j)
                b.data(i, j) = row[static_cast<std::size_t>(j)];
        }
        char extra;
        if (in.read(&extra, 1))
            throw DataError("binary BOLD payload longer than header declares");
    } else {
        std::string line;
        long long i = 0;
        while (std::getline(in, line)) {
            if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
            if (i >= t_count) throw DataError("more rows than header T=" + std::to_string(t_count));
            const auto fields = detail::split_fields(line, ',');
            if (static_cast<long long>(fields.size()) != v_count)
                throw DataError("row " + std::to_string(i) + " has " +
                                std::to_string(fields.size()) + " columns, expected " +
                                std::to_string(v_count));
            for (long long j = 0; j < v_count; ++j)
                b.data(i, j) = detail::parse_real(fields[static_cast<std::size_t>(j)],
                                                  "cell (" + std::to_string(i) + "," +
                                                      std::to_string(j) + ")");
            ++i;
        }
        if (i != t_count)
            throw DataError("file has " + std::to_string(i) + " rows, header declares T=" +
                            std::to_string(t_count));
    }
    validate_bold(b);
    return b;
}

/// Writes the dense matrix format. Binary when the path ends in .bmat.
inline void save_bold(const BoldMatrix& b, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write BOLD file: " + path);
    out << "BOLD v1 " << b.T() << ' ' << b.V() << ' ';
    {
        std::ostringstream ss;
        ss.precision(17);
        ss << b.tr;
        out << ss.str() << '\n';
    }
    if (detail::has_suffix(path, ".bmat")) {
        std::vector<double> row(static_cast<std::size_t>(b.V()));
        for (Eigen::Index i = 0; i < b.T(); ++i) {
            for (Eigen::Index j = 0; j < b.V(); ++j)
                row[static_cast<std::size_t>(j)] = b.data(i, j);
            out.write(reinterpret_cast<const char*>(row.data()),
                      static_cast<std::streamsize>(sizeof(double) * row.size()));
        }
    } else {
        out.precision(17);
        for (Eigen::Index i = 0; i < b.T(); ++i) {
            for (Eigen::Index j = 0; j < b.V(); ++j)
                out << b.data(i, j) << (j + 1 == b.V() ? '\n' : ',');
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

/// Loads the mesh format: `MESH v1 <V> <F>`, V coordinate rows, F face rows.
inline SurfaceMesh load_mesh(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mesh file: " + path);
    std::string magic, version;
    long long v_count = 0, f_count = 0;
    if (!(in >> magic >> version >> v_count >> f_count) || magic != "MESH" || version != "v1")
        throw DataError("malformed mesh header in " + path);
    if (v_count < 1 || f_count < 0) throw DataError("mesh header declares V=" +
                                                    std::to_string(v_count));
    SurfaceMesh m;
    m.coords.resize(v_count, 3);
    for (long long v = 0; v < v_count; ++v)
        for (int c = 0; c < 3; ++c) {
            if (!(in >> m.coords(v, c)))
                throw DataError("mesh coordinate row " + std::to_string(v) + " truncated");
            if (!std::isfinite(m.coords(v, c)))
                throw DataError("non-finite coordinate at vertex " + std::to_string(v));
        }
    m.faces.resize(static_cast<std::size_t>(f_count));
    std::vector<char> touched(static_cast<std::size_t>(v_count), 0);
    for (long long f = 0; f < f_count; ++f) {
        std::array<int, 3> face{};
        for (int c = 0; c < 3; ++c) {
            if (!(in >> face[static_cast<std::size_t>(c)]))
                throw DataError("mesh face row " + std::to_string(f) + " truncated");
            const int idx = face[static_cast<std::size_t>(c)];
            if (idx < 0 || idx >= v_count)
                throw DataError("face " + std::to_string(f) + " references vertex " +
                                std::to_string(idx) + " outside [0," + std::to_string(v_count) +
                                ")");
        }
        if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2])
            throw DataError("degenerate face " + std::to_string(f) + " repeats a vertex");
        for (int idx : face) touched[static_cast<std::size_t>(idx)] = 1;
        m.faces[static_cast<std::size_t>(f)] = face;
    }
    for (long long v = 0; v < v_count; ++v)
        if (!touched[static_cast<std::size_t>(v)])
            m.isolated_vertices.push_back(static_cast<int>(v));
    return m;
}

inline void save_mesh(const SurfaceMesh& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write mesh file: " + path);
    out.precision(17);
    out << "MESH v1 " << m.V() << ' ' << m.F() << '\n';
    for (Eigen::Index v = 0; v < m.V(); ++v)
        out << m.coords(v, 0) << ' ' << m.coords(v, 1) << ' ' << m.coords(v, 2) << '\n';
    for (const auto& f : m.faces) out << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    if (!out) throw DataError("write failed: " + path);
}

/// Loads events: rows `condition,onset,duration[,amplitude]`, grouped by
/// condition, onsets sorted and required strictly increasing per condition.
inline EventSchedule load_events(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open events file: " + path);
    EventSchedule sched;
    std::string line;
    long long row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto fields = detail::split_fields(line, ',');
        if (fields.size() == 1) fields = detail::split_fields(line, '\t');
        if (fields.size() < 3 || fields.size() > 4)
            throw DataError("events row " + std::to_string(row) +
                            " needs condition,onset,duration[,amplitude]");
        const std::string& name = fields[0];
        const double onset = detail::parse_real(fields[1], "events row " + std::to_string(row));
        const double dur = detail::parse_real(fields[2], "events row " + std::to_string(row));
        const double amp = fields.size() == 4
                               ? detail::parse_real(fields[3], "events row " + std::to_string(row))
                               : 1.0;
        if (onset < 0.0) throw DataError("negative onset at events row " + std::to_string(row));
        if (dur <= 0.0) throw DataError("nonpositive duration at events row " + std::to_string(row));
        auto it = std::find_if(sched.conditions.begin(), sched.conditions.end(),
                               [&](const EventCondition& c) { return c.name == name; });
        if (it == sched.conditions.end()) {
            sched.conditions.push_back(EventCondition{name, {}, {}, {}});
            it = std::prev(sched.conditions.end());
        }
        it->onsets.push_back(onset);
        it->durations.push_back(dur);
        it->amplitudes.push_back(amp);
    }
    if (sched.conditions.empty()) throw DataError("no conditions in events file " + path);
    for (auto& c : sched.conditions) {
        std::vector<std::size_t> order(c.onsets.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(),
                  [&](std::size_t a, std::size_t b) { return c.onsets[a] < c.onsets[b]; });
        EventCondition sorted{c.name, {}, {}, {}};
        for (std::size_t i : order) {
            sorted.onsets.push_back(c.onsets[i]);
            sorted.durations.push_back(c.durations[i]);
            sorted.amplitudes.push_back(c.amplitudes[i]);
        }
        for (std::size_t i = 1; i < sorted.onsets.size(); ++i)
            if (sorted.onsets[i] <= sorted.onsets[i - 1])
                throw DataError("condition '" + c.name + "' has non-increasing onsets");
        c = std::move(sorted);
    }
    return sched;
}

inline void save_events(const EventSchedule& sched, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write events file: " + path);
    out.precision(17);
    for (const auto& c : sched.conditions)
        for (std::size_t i = 0; i < c.onsets.size(); ++i)
            out << c.name << ',' << c.onsets[i] << ',' << c.durations[i] << ','
                << c.amplitudes[i] << '\n';
    if (!out) throw DataError("write failed: " + path);
}

/// Generic dense matrix file: header "MATRIX v1 <rows> <cols>" followed by
/// one whitespace-separated row per line.
inline void save_matrix(const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "MATRIX v1 " << m.rows() << ' ' << m.cols() << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << m(i, j) << (j + 1 < m.cols() ? " " : "");
        out << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

inline Eigen::MatrixXd load_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open '" + path + "'");
    std::string tag, ver;
    Eigen::Index rows = 0, cols = 0;
    in >> tag >> ver >> rows >> cols;
    if (tag != "MATRIX" || ver != "v1")
        throw DataError("'" + path + "': expected 'MATRIX v1' header");
    if (rows < 0 || cols < 0) throw DataError("'" + path + "': negative dimensions");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j)
            if (!(in >> m(i, j)))
                throw DataError("'" + path + "': truncated at row " + std::to_string(i));
    return m;
}

} // namespace prewhiten
