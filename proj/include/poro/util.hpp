#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace poro::util {

/// Shortest-faithful decimal form of a double (17 significant digits).
std::string format_g17(double v);

/// Parse a double, throwing ArtifactError on trailing garbage / empty field.
double parse_double(const std::string& s);

std::vector<uint8_t> read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, const void* data, size_t size);
void write_file(const std::filesystem::path& p, const std::string& text);

/// Hex SHA-256 of a byte buffer / file contents.
std::string sha256_hex(const void* data, size_t size);
std::string sha256_file(const std::filesystem::path& p);

/// Split one CSV line on commas (no quoting; fields in this project never contain commas).
std::vector<std::string> split_csv_line(const std::string& line);

/// Read a CSV file into header + rows, validating a fixed column count.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};
CsvTable read_csv(const std::filesystem::path& p);

// Little-endian scalar serialization (host-independent).
void put_u32_le(std::vector<uint8_t>& out, uint32_t v);
void put_u64_le(std::vector<uint8_t>& out, uint64_t v);
void put_f64_le(std::vector<uint8_t>& out, double v);
uint32_t get_u32_le(const uint8_t* p);
uint64_t get_u64_le(const uint8_t* p);
double get_f64_le(const uint8_t* p);

/// Run fn(i) for i in [0, n) on up to `threads` workers; first exception rethrown.
/// Work is statically chunked so output-by-index writes stay deterministic.
void parallel_for(size_t n, int threads, const std::function<void(size_t)>& fn);

/// Advisory exclusive lock on a directory (flock on <dir>/.lock); released on destruction.
class DirLock {
public:
    explicit DirLock(const std::filesystem::path& dir);
    ~DirLock();
    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

private:
    int fd_ = -1;
    std::filesystem::path path_;
};

} // namespace poro::util
