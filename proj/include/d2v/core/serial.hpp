#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "d2v/core/error.hpp"

namespace d2v {

/// Little-endian binary writer for container formats (shards, checkpoints).
class BinWriter {
public:
    explicit BinWriter(const std::string& path)
        : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot open for writing", path);
    }

    void bytes(const void* p, size_t n) {
        out_.write(reinterpret_cast<const char*>(p), std::streamsize(n));
        if (!out_) throw IoError("write failed", path_);
    }

    template <class T>
    void pod(T v) {
        static_assert(std::is_trivially_copyable_v<T>);
        bytes(&v, sizeof(T));
    }

    void str(const std::string& s) {
        pod(uint32_t(s.size()));
        bytes(s.data(), s.size());
    }

    void close() { out_.close(); }

private:
    std::string path_;
    std::ofstream out_;
};

class BinReader {
public:
    explicit BinReader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open for reading", path);
    }

    void bytes(void* p, size_t n) {
        in_.read(reinterpret_cast<char*>(p), std::streamsize(n));
        if (in_.gcount() != std::streamsize(n)) throw IoError("truncated read", path_);
    }

    template <class T>
    T pod() {
        static_assert(std::is_trivially_copyable_v<T>);
        T v;
        bytes(&v, sizeof(T));
        return v;
    }

    std::string str() {
        uint32_t n = pod<uint32_t>();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ifstream in_;
};

} // namespace d2v
