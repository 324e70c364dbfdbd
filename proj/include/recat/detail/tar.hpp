#pragma once

#include <cstdio>
#include <cstring>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "recat/error.hpp"

namespace recat::detail {

// Minimal POSIX ustar: regular files only, fixed mode/owner/mtime so the
// same members always produce the same bytes. Readable by `tar tf`.
struct TarMember {
  std::string name;
  std::string data;
};

inline std::string tar_pack(const std::vector<TarMember>& members) {
  std::string out;
  for (const auto& m : members) {
    if (m.name.empty() || m.name.size() >= 100) throw Error(Errc::Io, "tar member name '" + m.name + "' unsupported");
    char h[512];
    std::memset(h, 0, sizeof h);
    std::memcpy(h, m.name.data(), m.name.size());
    std::snprintf(h + 100, 8, "%07o", 0644u);
    std::snprintf(h + 108, 8, "%07o", 0u);
    std::snprintf(h + 116, 8, "%07o", 0u);
    std::snprintf(h + 124, 12, "%011llo", static_cast<unsigned long long>(m.data.size()));
    std::snprintf(h + 136, 12, "%011o", 0u);
    h[156] = '0';
    std::memcpy(h + 257, "ustar", 6);
    h[263] = '0';
    h[264] = '0';
    std::memset(h + 148, ' ', 8);
    unsigned sum = 0;
    for (unsigned char c : h) sum += c;
    std::snprintf(h + 148, 8, "%06o", sum);
    h[155] = ' ';
    out.append(h, sizeof h);
    out += m.data;
    out.append((512 - m.data.size() % 512) % 512, '\0');
  }
  out.append(1024, '\0');
  return out;
}

inline std::map<std::string, std::string> tar_unpack(std::string_view archive) {
  std::map<std::string, std::string> out;
  std::size_t pos = 0;
  while (pos + 512 <= archive.size()) {
    std::string_view h = archive.substr(pos, 512);
    if (h.find_first_not_of('\0') == std::string_view::npos) break;
    if (h.substr(257, 5) != "ustar") throw Error(Errc::MalformedRecord, "archive: not a ustar header");
    unsigned expect = 0;
    for (std::size_t i = 0; i < 512; ++i) expect += (i >= 148 && i < 156) ? ' ' : static_cast<unsigned char>(h[i]);
    if (std::stoul(std::string(h.substr(148, 6)), nullptr, 8) != expect) {
      throw Error(Errc::MalformedRecord, "archive: header checksum mismatch");
    }
    std::string name(h.substr(0, 100).data(), strnlen(h.data(), 100));
    auto size = std::stoull(std::string(h.substr(124, 11)), nullptr, 8);
    pos += 512;
    if (pos + size > archive.size()) throw Error(Errc::MalformedRecord, "archive: truncated member " + name);
    out[name] = std::string(archive.substr(pos, size));
    pos += (size + 511) / 512 * 512;
  }
  return out;
}

}  // namespace recat::detail
