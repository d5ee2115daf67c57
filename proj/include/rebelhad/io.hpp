#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace rebelhad {

// Writes to `<path>.tmp.<pid>` and renames over `path`, so readers never
// observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

// Little-endian helpers used by the binary formats.
void put_u32le(std::string& out, uint32_t v);
void put_f32le(std::string& out, float v);
void put_f64le(std::string& out, double v);
uint32_t get_u32le(const char* p);
float get_f32le(const char* p);
double get_f64le(const char* p);

// Lists regular files with the given extension, sorted by filename.
std::vector<std::filesystem::path> list_files(const std::filesystem::path& dir,
                                              std::string_view extension);

}  // namespace rebelhad
