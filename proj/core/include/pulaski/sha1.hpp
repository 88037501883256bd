#pragma once

#include <cstdint>
#include <string>

namespace pulaski {

// SHA-1 as 40 hex characters; used for content hashes in run manifests.
std::string sha1_hex(const void* data, size_t len);
std::string sha1_hex(const std::string& s);
std::string sha1_file(const std::string& path);

}  // namespace pulaski
