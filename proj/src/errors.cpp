#include <ws3d/errors.hpp>

namespace ws3d {

FormatError::FormatError(const std::string& what, std::size_t offset)
    : Error(what + " (at byte offset " + std::to_string(offset) + ")"), m_offset(offset)
{
}

UnsupportedVersionError::UnsupportedVersionError(unsigned found, unsigned expected)
    : FormatError("unsupported version " + std::to_string(found) + ", expected " +
                      std::to_string(expected),
                  4)
{
}

} // namespace ws3d
