#include "avseg/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

#include "avseg/error.hpp"

namespace avseg {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace {

void put_u64(std::ostream& os, uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t get_u64(std::istream& is) {
    uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    check_data(static_cast<bool>(is), "tensor container truncated in header");
    return v;
}

struct Header {
    Dtype dtype;
    Shape shape;
};

void write_header(std::ostream& os, Dtype dtype, const Shape& shape) {
    put_u64(os, kTensorMagic);
    put_u64(os, static_cast<uint64_t>(dtype));
    put_u64(os, static_cast<uint64_t>(shape.size()));
    for (int64_t d : shape) put_u64(os, static_cast<uint64_t>(d));
}

Header read_header(std::istream& is) {
    check_data(get_u64(is) == kTensorMagic, "bad tensor container magic");
    uint64_t code = get_u64(is);
    check_data(code >= 1 && code <= 4, "unknown dtype code " + std::to_string(code));
    uint64_t rank = get_u64(is);
    check_data(rank <= 8, "implausible tensor rank " + std::to_string(rank));
    Header h;
    h.dtype = static_cast<Dtype>(code);
    h.shape.resize(rank);
    for (uint64_t i = 0; i < rank; ++i) {
        uint64_t d = get_u64(is);
        check_data(d <= static_cast<uint64_t>(std::numeric_limits<int64_t>::max()), "dimension overflow");
        h.shape[i] = static_cast<int64_t>(d);
    }
    return h;
}

template <class Elem, class Src>
void write_payload(std::ostream& os, const Src* src, int64_t n) {
    std::vector<Elem> buf(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) buf[static_cast<size_t>(i)] = static_cast<Elem>(src[i]);
    os.write(reinterpret_cast<const char*>(buf.data()), n * static_cast<int64_t>(sizeof(Elem)));
}

template <class Elem, class Dst>
void read_payload(std::istream& is, Dst* dst, int64_t n) {
    std::vector<Elem> buf(static_cast<size_t>(n));
    is.read(reinterpret_cast<char*>(buf.data()), n * static_cast<int64_t>(sizeof(Elem)));
    check_data(static_cast<bool>(is) && is.gcount() == n * static_cast<int64_t>(sizeof(Elem)),
               "tensor container truncated in payload");
    for (int64_t i = 0; i < n; ++i) dst[i] = static_cast<Dst>(buf[static_cast<size_t>(i)]);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t, Dtype storage) {
    write_header(os, storage, t.shape());
    switch (storage) {
        case Dtype::F64: write_payload<double>(os, t.data(), t.numel()); break;
        case Dtype::F32: write_payload<float>(os, t.data(), t.numel()); break;
        case Dtype::I32: write_payload<int32_t>(os, t.data(), t.numel()); break;
        case Dtype::U8: write_payload<uint8_t>(os, t.data(), t.numel()); break;
    }
}

void write_tensor(std::ostream& os, const IntTensor& t, Dtype storage) {
    write_header(os, storage, t.shape());
    switch (storage) {
        case Dtype::F64: write_payload<double>(os, t.data(), t.numel()); break;
        case Dtype::F32: write_payload<float>(os, t.data(), t.numel()); break;
        case Dtype::I32: write_payload<int32_t>(os, t.data(), t.numel()); break;
        case Dtype::U8: write_payload<uint8_t>(os, t.data(), t.numel()); break;
    }
}

Tensor read_tensor(std::istream& is) {
    Header h = read_header(is);
    Tensor t(h.shape);
    switch (h.dtype) {
        case Dtype::F64: read_payload<double>(is, t.data(), t.numel()); break;
        case Dtype::F32: read_payload<float>(is, t.data(), t.numel()); break;
        case Dtype::I32: read_payload<int32_t>(is, t.data(), t.numel()); break;
        case Dtype::U8: read_payload<uint8_t>(is, t.data(), t.numel()); break;
    }
    return t;
}

IntTensor read_int_tensor(std::istream& is) {
    Header h = read_header(is);
    IntTensor t(h.shape);
    switch (h.dtype) {
        case Dtype::F64: read_payload<double>(is, t.data(), t.numel()); break;
        case Dtype::F32: read_payload<float>(is, t.data(), t.numel()); break;
        case Dtype::I32: read_payload<int32_t>(is, t.data(), t.numel()); break;
        case Dtype::U8: read_payload<uint8_t>(is, t.data(), t.numel()); break;
    }
    return t;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    check_data(os.is_open(), "cannot open for writing: " + path.string());
    return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    check_data(is.is_open(), "cannot open for reading: " + path.string());
    return is;
}

}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor& t, Dtype storage) {
    auto os = open_out(path);
    write_tensor(os, t, storage);
    check_data(static_cast<bool>(os), "write failed: " + path.string());
}

void write_tensor_file(const std::filesystem::path& path, const IntTensor& t, Dtype storage) {
    auto os = open_out(path);
    write_tensor(os, t, storage);
    check_data(static_cast<bool>(os), "write failed: " + path.string());
}

Tensor read_tensor_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_tensor(is);
}

IntTensor read_int_tensor_file(const std::filesystem::path& path) {
    auto is = open_in(path);
    return read_int_tensor(is);
}

void write_archive(const std::filesystem::path& path, const std::map<std::string, Tensor>& entries) {
    auto os = open_out(path);
    put_u64(os, kArchiveMagic);
    put_u64(os, entries.size());
    for (const auto& [name, tensor] : entries) {
        put_u64(os, name.size());
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_tensor(os, tensor, Dtype::F64);
    }
    check_data(static_cast<bool>(os), "archive write failed: " + path.string());
}

std::map<std::string, Tensor> read_archive(const std::filesystem::path& path) {
    auto is = open_in(path);
    check_data(get_u64(is) == kArchiveMagic, "bad archive magic: " + path.string());
    uint64_t count = get_u64(is);
    std::map<std::string, Tensor> out;
    for (uint64_t i = 0; i < count; ++i) {
        uint64_t len = get_u64(is);
        check_data(len <= 4096, "implausible archive entry name length");
        std::string name(len, '\0');
        is.read(name.data(), static_cast<std::streamsize>(len));
        check_data(static_cast<bool>(is), "archive truncated: " + path.string());
        out.emplace(std::move(name), read_tensor(is));
    }
    return out;
}

Tensor round_to_f32(const Tensor& t) {
    Tensor out(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) out[i] = static_cast<double>(static_cast<float>(t[i]));
    return out;
}

}  // namespace avseg
