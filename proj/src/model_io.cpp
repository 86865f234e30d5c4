#include "falldet/model_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace falldet {

std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw Error("number formatting failed");
    return std::string(buf, ptr);
}

namespace {

constexpr const char* kMagicAbod = "fdmodel v1 abod";
constexpr const char* kMagicSvm = "fdmodel v1 svm";

double parse_double(const std::string& s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("model file: bad number '" + s + "'");
    return v;
}

std::size_t parse_size(const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error("model file: bad count '" + s + "'");
    return v;
}

class LineReader {
public:
    explicit LineReader(std::istream& in) : in_(in) {}

    std::string next() {
        std::string line;
        if (!std::getline(in_, line)) throw Error("model file: unexpected end of file");
        return line;
    }

    /// "key value" line; checks the key and returns the value.
    std::string field(const std::string& key) {
        std::string line = next();
        if (line.size() <= key.size() || line.compare(0, key.size(), key) != 0 ||
            line[key.size()] != ' ')
            throw Error("model file: expected field '" + key + "'");
        return line.substr(key.size() + 1);
    }

private:
    std::istream& in_;
};

std::vector<double> parse_row(const std::string& line, std::size_t dim) {
    std::vector<double> row;
    row.reserve(dim);
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
        while (p < end && *p == ' ') ++p;
        if (p == end) break;
        double v = 0.0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc()) throw Error("model file: bad data row");
        row.push_back(v);
        p = next;
    }
    if (row.size() != dim) throw Error("model file: data row has wrong width");
    return row;
}

void write_row(std::ostringstream& out, const std::vector<double>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (i) out << ' ';
        out << format_double(row[i]);
    }
    out << '\n';
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write " + tmp);
        out << content;
        if (!out) {
            std::filesystem::remove(tmp);
            throw Error("write failed: " + tmp);
        }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace

std::string serialize_model(const AbodModel& m) {
    const std::size_t dim = m.refs.empty() ? kFeatureDim : m.refs[0].size();
    std::ostringstream out;
    out << kMagicAbod << '\n';
    out << "dim " << dim << '\n';
    out << "refs " << m.refs.size() << '\n';
    out << "quantile " << format_double(m.params.quantile) << '\n';
    out << "safety " << format_double(m.params.safety) << '\n';
    out << "cap " << m.params.cap << '\n';
    out << "recal_interval " << m.params.recal_interval << '\n';
    out << "pending " << m.pending << '\n';
    out << "knn " << (m.params.knn_k ? std::to_string(*m.params.knn_k) : "none") << '\n';
    out << "dup_epsilon " << format_double(m.params.dup_epsilon) << '\n';
    out << "threshold " << (m.threshold ? format_double(*m.threshold) : "none") << '\n';
    out << "origins ";
    for (RefOrigin o : m.origins) out << static_cast<char>(o);
    out << '\n';
    out << "data\n";
    for (const auto& r : m.refs) write_row(out, r);
    out << "end\n";
    return out.str();
}

std::string serialize_model(const SvmModel& m) {
    const std::size_t dim = m.support_vectors.empty() ? kFeatureDim : m.support_vectors[0].size();
    std::ostringstream out;
    out << kMagicSvm << '\n';
    out << "dim " << dim << '\n';
    out << "support_vectors " << m.support_vectors.size() << '\n';
    out << "gamma " << format_double(m.gamma) << '\n';
    out << "c " << format_double(m.c) << '\n';
    out << "bias " << format_double(m.bias) << '\n';
    out << "coeffs ";
    for (std::size_t i = 0; i < m.coeffs.size(); ++i) {
        if (i) out << ' ';
        out << format_double(m.coeffs[i]);
    }
    out << '\n';
    out << "data\n";
    for (const auto& sv : m.support_vectors) write_row(out, sv);
    out << "end\n";
    return out.str();
}

void save_model(const AbodModel& m, const std::filesystem::path& path) {
    write_atomic(path, serialize_model(m));
}

void save_model(const SvmModel& m, const std::filesystem::path& path) {
    write_atomic(path, serialize_model(m));
}

ModelKind peek_model_kind(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string magic;
    std::getline(in, magic);
    if (magic == kMagicAbod) return ModelKind::Abod;
    if (magic == kMagicSvm) return ModelKind::Svm;
    throw Error("not a model file: " + path.string());
}

AbodModel load_abod_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    LineReader r(in);
    if (r.next() != kMagicAbod) throw Error("not an abod model file: " + path.string());

    AbodModel m;
    const auto dim = parse_size(r.field("dim"));
    const auto nrefs = parse_size(r.field("refs"));
    m.params.quantile = parse_double(r.field("quantile"));
    m.params.safety = parse_double(r.field("safety"));
    m.params.cap = parse_size(r.field("cap"));
    m.params.recal_interval = parse_size(r.field("recal_interval"));
    m.pending = parse_size(r.field("pending"));
    const std::string knn = r.field("knn");
    if (knn != "none") m.params.knn_k = parse_size(knn);
    m.params.dup_epsilon = parse_double(r.field("dup_epsilon"));
    const std::string thr = r.field("threshold");
    if (thr != "none") m.threshold = parse_double(thr);

    const std::string origins = r.field("origins");
    if (origins.size() != nrefs) throw Error("model file: origins length mismatch");
    m.origins.reserve(nrefs);
    for (char c : origins) {
        if (c != 'E' && c != 'U') throw Error("model file: bad origin tag");
        m.origins.push_back(static_cast<RefOrigin>(c));
    }

    if (r.next() != "data") throw Error("model file: missing data section");
    m.refs.reserve(nrefs);
    for (std::size_t i = 0; i < nrefs; ++i) m.refs.push_back(parse_row(r.next(), dim));
    if (r.next() != "end") throw Error("model file: missing end marker");
    return m;
}

SvmModel load_svm_model(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    LineReader r(in);
    if (r.next() != kMagicSvm) throw Error("not an svm model file: " + path.string());

    SvmModel m;
    const auto dim = parse_size(r.field("dim"));
    const auto nsv = parse_size(r.field("support_vectors"));
    m.gamma = parse_double(r.field("gamma"));
    m.c = parse_double(r.field("c"));
    m.bias = parse_double(r.field("bias"));
    m.coeffs = parse_row(r.field("coeffs"), nsv);
    if (r.next() != "data") throw Error("model file: missing data section");
    m.support_vectors.reserve(nsv);
    for (std::size_t i = 0; i < nsv; ++i) m.support_vectors.push_back(parse_row(r.next(), dim));
    if (r.next() != "end") throw Error("model file: missing end marker");
    return m;
}

}  // namespace falldet
