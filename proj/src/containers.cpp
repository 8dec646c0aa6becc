#include "loudgen/containers.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "loudgen/error.hpp"

namespace loudgen {

namespace {

class Writer {
public:
    explicit Writer(const char* magic) { bytes_.append(magic, 4); u32(kContainerVersion); }

    void u32(std::uint32_t v) { raw(&v, 4); }
    void u64(std::uint64_t v) { raw(&v, 8); }
    void text(const std::string& s)
    {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes_ += s;
    }
    void floats(const Matrix& m)
    {
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                const auto f = static_cast<float>(m(r, c));
                raw(&f, 4);
            }
        }
    }
    void save(const std::filesystem::path& path) const
    {
        std::ofstream out(path, std::ios::binary);
        require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + path.string());
        out.write(bytes_.data(), static_cast<std::streamsize>(bytes_.size()));
        require(static_cast<bool>(out), ErrorCode::Io, "short write to " + path.string());
    }

private:
    void raw(const void* p, std::size_t n) { bytes_.append(static_cast<const char*>(p), n); }
    std::string bytes_;
};

class Reader {
public:
    Reader(const std::filesystem::path& path, const char* magic) : path_(path.string())
    {
        std::ifstream in(path, std::ios::binary);
        require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path_);
        std::ostringstream ss;
        ss << in.rdbuf();
        bytes_ = ss.str();
        require(bytes_.size() >= 8 && std::memcmp(bytes_.data(), magic, 4) == 0, ErrorCode::Format,
                path_ + " is not a " + std::string(magic, 4) + " file");
        pos_ = 4;
        const std::uint32_t version = u32();
        require(version == kContainerVersion, ErrorCode::Format,
                path_ + ": unsupported container version " + std::to_string(version));
    }

    std::uint32_t u32()
    {
        std::uint32_t v;
        raw(&v, 4);
        return v;
    }
    std::uint64_t u64()
    {
        std::uint64_t v;
        raw(&v, 8);
        return v;
    }
    std::string text()
    {
        const std::uint32_t n = u32();
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    Matrix floats(std::uint64_t rows, std::uint64_t cols)
    {
        need(rows * cols * 4);
        Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            for (Eigen::Index c = 0; c < m.cols(); ++c) {
                float f;
                raw(&f, 4);
                m(r, c) = f;
            }
        }
        return m;
    }
    void finish() const { require(pos_ == bytes_.size(), ErrorCode::Format, path_ + ": trailing bytes"); }

private:
    void need(std::uint64_t n) const
    {
        require(n <= bytes_.size() - pos_, ErrorCode::Format, path_ + ": truncated container");
    }
    void raw(void* p, std::size_t n)
    {
        need(n);
        std::memcpy(p, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::string path_;
    std::string bytes_;
    std::size_t pos_ = 0;
};

} // namespace

void write_matrix(const std::filesystem::path& path, const Matrix& m)
{
    Writer w("LGMX");
    w.u64(static_cast<std::uint64_t>(m.rows()));
    w.u64(static_cast<std::uint64_t>(m.cols()));
    w.floats(m);
    w.save(path);
}

Matrix read_matrix(const std::filesystem::path& path)
{
    Reader r(path, "LGMX");
    const auto rows = r.u64();
    const auto cols = r.u64();
    Matrix m = r.floats(rows, cols);
    r.finish();
    return m;
}

void write_condition(const std::filesystem::path& path, const ConditionSet& cond)
{
    require(cond.assembled.rows() == ConditionSet::kBlocks * cond.m && cond.assembled.cols() == cond.width,
            ErrorCode::Dimension, "condition matrix does not match its header");
    Writer w("LGCN");
    w.u32(static_cast<std::uint32_t>(cond.m));
    w.u32(static_cast<std::uint32_t>(cond.width));
    w.u32(static_cast<std::uint32_t>(cond.presence.id));
    w.u32((cond.presence.language ? 4u : 0u) | (cond.presence.audio ? 2u : 0u) | (cond.presence.video ? 1u : 0u));
    w.floats(cond.assembled);
    w.save(path);
}

ConditionSet read_condition(const std::filesystem::path& path)
{
    Reader r(path, "LGCN");
    const auto m = r.u32();
    const auto d = r.u32();
    const auto id = r.u32();
    const auto bits = r.u32();
    require(id <= 7 && bits == id, ErrorCode::Format, path.string() + ": inconsistent task id and presence bits");
    require(m >= 1 && d >= 1, ErrorCode::Format, path.string() + ": empty condition");
    ConditionSet cond{m, d, task_from_id(static_cast<int>(id)), r.floats(std::uint64_t{8} * m, d)};
    r.finish();
    return cond;
}

void write_latent(const std::filesystem::path& path, const Latent& z)
{
    Writer w("LGLT");
    w.u32(static_cast<std::uint32_t>(z.layout));
    w.u64(static_cast<std::uint64_t>(z.channels));
    w.u64(static_cast<std::uint64_t>(z.frames));
    w.u32(static_cast<std::uint32_t>(z.downsample));
    w.u32(static_cast<std::uint32_t>(z.source_rate));
    w.u64(z.unpadded_length);
    w.floats(z.data);
    w.save(path);
}

Latent read_latent(const std::filesystem::path& path)
{
    Reader r(path, "LGLT");
    Latent z;
    const auto layout = r.u32();
    require(layout == 1 || layout == 2, ErrorCode::Format, path.string() + ": unknown latent layout");
    z.layout = static_cast<LatentLayout>(layout);
    z.channels = static_cast<Eigen::Index>(r.u64());
    z.frames = static_cast<Eigen::Index>(r.u64());
    z.downsample = static_cast<int>(r.u32());
    z.source_rate = static_cast<int>(r.u32());
    z.unpadded_length = r.u64();
    z.data = r.floats(static_cast<std::uint64_t>(z.channels), static_cast<std::uint64_t>(z.frames));
    r.finish();
    return z;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck)
{
    Writer w("LGCK");
    w.u32(static_cast<std::uint32_t>(ck.metadata.size()));
    for (const auto& [k, v] : ck.metadata) {
        w.text(k);
        w.text(v);
    }
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
        w.text(ck.tensors.name(i));
        w.u64(static_cast<std::uint64_t>(ck.tensors.value(i).rows()));
        w.u64(static_cast<std::uint64_t>(ck.tensors.value(i).cols()));
        w.floats(ck.tensors.value(i));
    }
    w.save(path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path)
{
    Reader r(path, "LGCK");
    Checkpoint ck;
    const auto entries = r.u32();
    for (std::uint32_t i = 0; i < entries; ++i) {
        std::string k = r.text();
        ck.metadata[k] = r.text();
    }
    const auto tensors = r.u32();
    for (std::uint32_t i = 0; i < tensors; ++i) {
        std::string name = r.text();
        const auto rows = r.u64();
        const auto cols = r.u64();
        ck.tensors.add(std::move(name), r.floats(rows, cols));
    }
    r.finish();
    return ck;
}

void merge_parameters(ParameterSet& into, const ParameterSet& from, const std::string& prefix)
{
    for (std::size_t i = 0; i < from.size(); ++i) {
        into.add(prefix + from.name(i), from.value(i));
    }
}

ParameterSet extract_parameters(const ParameterSet& from, const std::string& prefix)
{
    ParameterSet out;
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from.name(i).starts_with(prefix)) {
            out.add(from.name(i).substr(prefix.size()), from.value(i));
        }
    }
    return out;
}

} // namespace loudgen
