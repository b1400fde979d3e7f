#pragma once

#include <string>
#include <utility>
#include <vector>

#include "climagent/util.hpp"

namespace climagent::archive {

struct Entry {
    std::string name;  // relative, '/'-separated
    std::string bytes;
};

// POSIX ustar bytes. Entries are sorted by name; mtime, uid and gid are zero
// and modes fixed, so equal inputs give byte-identical archives.
std::string make_tar(std::vector<Entry> entries);

// Reads back regular-file entries (used by tests and `export --list`).
std::vector<Entry> read_tar(std::string_view bytes);

}  // namespace climagent::archive
