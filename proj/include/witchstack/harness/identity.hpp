#pragma once

#include <string>
#include <utility>

#include "witchstack/aoverc/aoverc.hpp"
#include "witchstack/ike/handshake.hpp"

namespace witchstack::harness {

enum class Role { Watch, Phone };
std::string_view role_name(Role r) noexcept;

// Everything one end needs: its own keys plus the paired peer's public keys.
struct Identity {
  Role role;
  ike::DeviceIdentity device;
  ike::PeerKeys peer;
  std::string peer_name;
  aoverc::Keyring aoverc;
};

// A freshly paired watch and phone.
std::pair<Identity, Identity> provision(const std::string& watch_name = "Watch",
                                        const std::string& phone_name = "iPhone");

// Errors for the readers: BadIdentityFile.
std::string identity_to_json(const Identity& id);
Identity identity_from_json(const std::string& text);
Identity load_identity(const std::string& path);
void save_identity(const std::string& path, const Identity& id);

}  // namespace witchstack::harness
