#include "palign/bundle.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "palign/errors.hpp"

namespace palign::numcore {

namespace {

constexpr const char* kMagicLine = "PALN1";

bool valid_name(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (c == ' ' || c == '\n' || c == '\r' || c == '\t') return false;
    return true;
}

std::uint64_t parse_u64(std::string_view s, const char* what) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw FormatError(std::string("bundle: bad integer in ") + what);
    return v;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

} // namespace

void Bundle::set_meta(const std::string& key, const std::string& value) {
    if (!valid_name(key)) throw FormatError("bundle: invalid meta key '" + key + "'");
    for (auto& [k, v] : meta) {
        if (k == key) {
            v = value;
            return;
        }
    }
    meta.emplace_back(key, value);
}

std::optional<std::string> Bundle::find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    return std::nullopt;
}

const std::string& Bundle::meta_at(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return v;
    throw FormatError("bundle: missing meta key '" + key + "'");
}

std::uint64_t Bundle::meta_u64(const std::string& key) const {
    return parse_u64(meta_at(key), key.c_str());
}

double Bundle::meta_f64(const std::string& key) const {
    const std::string& s = meta_at(key);
    try {
        std::size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError("bundle: bad float in meta key '" + key + "'");
    }
}

void Bundle::add(const std::string& name, Tensor t) {
    if (!valid_name(name)) throw FormatError("bundle: invalid tensor name '" + name + "'");
    if (has(name)) throw FormatError("bundle: duplicate tensor '" + name + "'");
    tensors.emplace_back(name, std::move(t));
}

bool Bundle::has(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return true;
    return false;
}

const Tensor& Bundle::tensor_at(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return t;
    throw FormatError("bundle: missing tensor '" + name + "'");
}

void Bundle::save(const std::filesystem::path& path) const {
    std::ostringstream blob(std::ios::binary);
    std::vector<std::uint64_t> offsets;
    offsets.reserve(tensors.size());
    for (const auto& [name, t] : tensors) {
        offsets.push_back(static_cast<std::uint64_t>(blob.tellp()));
        write_pbt1(blob, t);
    }
    std::string blob_bytes = blob.str();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << kMagicLine << "\n";
    for (const auto& [k, v] : meta) out << "meta " << k << " " << v << "\n";
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        const auto& [name, t] = tensors[i];
        out << "tensor " << name << " " << offsets[i] << " " << pbt1_size(t) << " " << t.dims.size();
        for (std::size_t d : t.dims) out << " " << d;
        out << "\n";
    }
    out << "blob " << blob_bytes.size() << "\n";
    out.write(blob_bytes.data(), static_cast<std::streamsize>(blob_bytes.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

Bundle Bundle::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line != kMagicLine)
        throw FormatError("bundle: bad magic in " + path.string());

    Bundle b;
    struct Entry {
        std::string name;
        std::uint64_t offset;
        std::uint64_t nbytes;
        std::vector<std::size_t> dims;
    };
    std::vector<Entry> entries;
    std::uint64_t blob_size = 0;
    bool saw_blob = false;

    while (std::getline(in, line)) {
        if (line.rfind("meta ", 0) == 0) {
            std::string rest = line.substr(5);
            auto sp = rest.find(' ');
            if (sp == std::string::npos) throw FormatError("bundle: malformed meta line");
            b.meta.emplace_back(rest.substr(0, sp), rest.substr(sp + 1));
        } else if (line.rfind("tensor ", 0) == 0) {
            auto toks = split_ws(line);
            if (toks.size() < 5) throw FormatError("bundle: malformed tensor line");
            Entry e;
            e.name = toks[1];
            e.offset = parse_u64(toks[2], "tensor offset");
            e.nbytes = parse_u64(toks[3], "tensor size");
            std::uint64_t ndim = parse_u64(toks[4], "tensor ndim");
            if (toks.size() != 5 + ndim) throw FormatError("bundle: tensor dims count mismatch");
            for (std::uint64_t d = 0; d < ndim; ++d)
                e.dims.push_back(static_cast<std::size_t>(parse_u64(toks[5 + d], "tensor dim")));
            entries.push_back(std::move(e));
        } else if (line.rfind("blob ", 0) == 0) {
            blob_size = parse_u64(line.substr(5), "blob size");
            saw_blob = true;
            break;
        } else {
            throw FormatError("bundle: unexpected manifest line '" + line + "'");
        }
    }
    if (!saw_blob) throw FormatError("bundle: missing blob section");

    std::string blob(blob_size, '\0');
    in.read(blob.data(), static_cast<std::streamsize>(blob_size));
    if (static_cast<std::uint64_t>(in.gcount()) != blob_size)
        throw FormatError("bundle: truncated blob section");

    for (const Entry& e : entries) {
        if (e.offset + e.nbytes > blob_size)
            throw FormatError("bundle: tensor '" + e.name + "' extends past blob end");
        std::istringstream slice(blob.substr(e.offset, e.nbytes), std::ios::binary);
        Tensor t = read_pbt1(slice);
        if (t.dims != e.dims)
            throw ShapeError("bundle: tensor '" + e.name + "' dims disagree between manifest and blob");
        if (pbt1_size(t) != e.nbytes)
            throw ShapeError("bundle: tensor '" + e.name + "' byte size disagrees with manifest");
        b.tensors.emplace_back(e.name, std::move(t));
    }
    return b;
}

} // namespace palign::numcore
