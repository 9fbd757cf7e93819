#include "tadlab/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "tadlab/io.hpp"

namespace tadlab::core {

using json = nlohmann::json;

std::size_t Dataset::n_anomalies() const {
    std::size_t c = 0;
    for (int v : y) c += (v == 1);
    return c;
}

void Dataset::validate() const {
    if (X.rows < 2 || X.cols < 1) throw ValidationError("dataset '" + name + "': need n >= 2 and d >= 1");
    if (y.size() != X.rows) throw ValidationError("dataset '" + name + "': label count differs from row count");
    if (!X.all_finite()) throw ValidationError("dataset '" + name + "': non-finite feature value");
    bool any_normal = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw ValidationError("dataset '" + name + "': label outside {0,1}");
        any_normal |= (v == 0);
    }
    if (!any_normal) throw ValidationError("dataset '" + name + "': no normal rows");
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_cell(const std::string& cell, std::size_t row, const std::string& col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end != begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ParseError("CSV parse error at row " + std::to_string(row) + ", column '" + col +
                         "': cannot parse '" + cell + "' as a number");
    return v;
}

}  // namespace

Dataset parse_csv(const std::string& text, const std::string& name) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line)) throw SchemaError("CSV '" + name + "': empty file");
    const std::vector<std::string> header = split_line(line);

    std::size_t label_col = header.size();
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == "label") label_col = j;
    if (label_col == header.size())
        throw SchemaError("CSV '" + name + "': missing required 'label' column");

    std::vector<std::string> feature_names;
    for (std::size_t j = 0; j < header.size(); ++j)
        if (j != label_col) feature_names.push_back(header[j]);
    if (feature_names.empty()) throw SchemaError("CSV '" + name + "': no feature columns");

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t n = 0;
    std::size_t row = 1;  // header was row 0
    while (std::getline(is, line)) {
        if (line.empty() || line == "\r") {
            ++row;
            continue;
        }
        const std::vector<std::string> cells = split_line(line);
        if (cells.size() != header.size())
            throw ParseError("CSV '" + name + "': row " + std::to_string(row) + " has " +
                             std::to_string(cells.size()) + " cells, expected " +
                             std::to_string(header.size()));
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const double v = parse_cell(cells[j], row, header[j]);
            if (j == label_col) {
                if (v != 0.0 && v != 1.0)
                    throw ValidationError("CSV '" + name + "': row " + std::to_string(row) +
                                          ": label must be 0 or 1");
                labels.push_back(static_cast<int>(v));
            } else {
                if (!std::isfinite(v))
                    throw ValidationError("CSV '" + name + "': row " + std::to_string(row) +
                                          ", column '" + header[j] + "': non-finite value");
                values.push_back(v);
            }
        }
        ++n;
        ++row;
    }

    Dataset ds;
    ds.name = name;
    ds.X.rows = n;
    ds.X.cols = feature_names.size();
    ds.X.data = std::move(values);
    ds.y = std::move(labels);
    ds.validate();
    return ds;
}

Dataset load_dataset(const std::string& path) {
    const std::string text = io::read_file(path);
    std::string name = path;
    const auto slash = name.find_last_of("/\\");
    if (slash != std::string::npos) name = name.substr(slash + 1);
    const auto dotpos = name.rfind('.');
    if (dotpos != std::string::npos) name = name.substr(0, dotpos);
    Dataset ds = parse_csv(text, name);
    ds.source_path = path;
    ds.source_checksum = io::fnv1a(text);
    return ds;
}

std::string to_csv(const Dataset& ds) {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t j = 0; j < ds.d(); ++j) os << 'f' << j << ',';
    os << "label\n";
    for (std::size_t i = 0; i < ds.n(); ++i) {
        for (std::size_t j = 0; j < ds.d(); ++j) os << ds.X(i, j) << ',';
        os << ds.y[i] << '\n';
    }
    return os.str();
}

void save_csv(const Dataset& ds, const std::string& path) { io::write_file(path, to_csv(ds)); }

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

SplitBundle one_class_split(const Dataset& ds, std::uint64_t seed) {
    ds.validate();
    std::vector<std::size_t> normals;
    std::vector<std::size_t> anomalies;
    for (std::size_t i = 0; i < ds.n(); ++i)
        (ds.y[i] == 0 ? normals : anomalies).push_back(i);
    if (normals.size() < 4)
        throw ContractError("one_class_split: need at least 4 normal rows, have " +
                            std::to_string(normals.size()));

    Rng rng(seed);
    rng.shuffle(normals);

    const std::size_t half = normals.size() / 2;
    const std::size_t n_val = half / 5;  // floor of the 20% validation slice
    const std::size_t n_train = half - n_val;

    SplitBundle sb;
    sb.seed = seed;
    sb.train.assign(normals.begin(), normals.begin() + static_cast<std::ptrdiff_t>(n_train));
    sb.val.assign(normals.begin() + static_cast<std::ptrdiff_t>(n_train),
                  normals.begin() + static_cast<std::ptrdiff_t>(half));
    sb.test.assign(normals.begin() + static_cast<std::ptrdiff_t>(half), normals.end());
    sb.test.insert(sb.test.end(), anomalies.begin(), anomalies.end());

    std::sort(sb.train.begin(), sb.train.end());
    std::sort(sb.val.begin(), sb.val.end());
    std::sort(sb.test.begin(), sb.test.end());
    return sb;
}

std::string SplitBundle::to_json() const {
    json j;
    j["seed"] = seed;
    j["train"] = train;
    j["val"] = val;
    j["test"] = test;
    return j.dump();
}

SplitBundle SplitBundle::from_json(const std::string& text) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ParseError("split manifest: invalid JSON");
    for (const char* key : {"seed", "train", "val", "test"})
        if (!j.contains(key)) throw SchemaError(std::string("split manifest: missing '") + key + "'");
    SplitBundle sb;
    sb.seed = j.at("seed").get<std::uint64_t>();
    sb.train = j.at("train").get<std::vector<std::size_t>>();
    sb.val = j.at("val").get<std::vector<std::size_t>>();
    sb.test = j.at("test").get<std::vector<std::size_t>>();
    return sb;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

Standardizer fit_standardizer(const Matrix& fit_on) {
    if (fit_on.empty()) throw ContractError("standardize: fit matrix is empty");
    const std::size_t n = fit_on.rows, d = fit_on.cols;
    Standardizer s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double lo = fit_on(0, j), hi = fit_on(0, j), sum = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double v = fit_on(i, j);
            sum += v;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (lo == hi) {
            // Constant column: pin the mean to the exact value so the
            // transformed column is exactly zero despite the floored std.
            s.mean[j] = lo;
            s.std[j] = Standardizer::kStdFloor;
            s.constant_columns.push_back(j);
            continue;
        }
        const double m = sum / static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = fit_on(i, j) - m;
            var += t * t;
        }
        var /= static_cast<double>(n);
        s.mean[j] = m;
        s.std[j] = std::max(std::sqrt(var), Standardizer::kStdFloor);
    }
    return s;
}

Matrix Standardizer::transform(const Matrix& x) const {
    if (x.cols != mean.size()) throw ContractError("standardizer: column count mismatch");
    Matrix out(x.rows, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) = (x(i, j) - mean[j]) / std[j];
    return out;
}

std::pair<Standardizer, Matrix> standardize(const Matrix& fit_on, const Matrix& apply_to) {
    if (fit_on.cols != apply_to.cols && !apply_to.empty())
        throw ContractError("standardize: column counts differ");
    Standardizer s = fit_standardizer(fit_on);
    return {s, s.transform(apply_to)};
}

}  // namespace tadlab::core
