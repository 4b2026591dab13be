#include "witchstack/harness/identity.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "witchstack/common/error.hpp"

namespace witchstack::harness {

using nlohmann::json;

std::string_view role_name(Role r) noexcept { return r == Role::Watch ? "watch" : "phone"; }

std::pair<Identity, Identity> provision(const std::string& watch_name, const std::string& phone_name) {
  auto w = ike::DeviceIdentity::generate(watch_name, "21S364");
  auto p = ike::DeviceIdentity::generate(phone_name, "21E236");
  auto [wk, pk] = aoverc::keyring_pair();
  Identity watch{Role::Watch, w, ike::PeerKeys::of(p), phone_name, std::move(wk)};
  Identity phone{Role::Phone, p, ike::PeerKeys::of(w), watch_name, std::move(pk)};
  return {std::move(watch), std::move(phone)};
}

std::string identity_to_json(const Identity& id) {
  json j{
      {"role", std::string(role_name(id.role))},
      {"device_name", id.device.device_name},
      {"build_version", id.device.build_version},
      {"terminus_version", id.device.terminus_version},
      {"class_c_key", to_hex(id.device.class_c_key.to_der())},
      {"class_d_key", to_hex(id.device.class_d_key.to_der())},
      {"aoverc_rsa_key", to_hex(id.aoverc.local_rsa.to_der())},
      {"aoverc_sign_key", to_hex(id.aoverc.local_sign.to_der())},
      {"peer",
       {{"device_name", id.peer_name},
        {"class_c_key", to_hex(id.peer.class_c.to_der())},
        {"class_d_key", to_hex(id.peer.class_d.to_der())},
        {"aoverc_rsa_key", to_hex(id.aoverc.peer_rsa.to_der())},
        {"aoverc_sign_key", to_hex(id.aoverc.peer_verify.to_der())}}},
  };
  return j.dump(2);
}

Identity identity_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    const json& peer = j.at("peer");
    auto der = [](const json& o, const char* k) { return from_hex(o.at(k).get<std::string>()); };
    std::string role = j.at("role").get<std::string>();
    if (role != "watch" && role != "phone") throw Error(Errc::BadIdentityFile, "role");
    ike::DeviceIdentity dev{j.at("device_name").get<std::string>(),
                            j.at("build_version").get<std::string>(),
                            j.value("terminus_version", std::uint16_t{0x000d}),
                            crypto::PrivateKey::from_der(der(j, "class_c_key")),
                            crypto::PrivateKey::from_der(der(j, "class_d_key"))};
    ike::PeerKeys pk{crypto::PublicKey::from_der(der(peer, "class_c_key")),
                     crypto::PublicKey::from_der(der(peer, "class_d_key"))};
    auto ring = aoverc::Keyring::make(crypto::PrivateKey::from_der(der(j, "aoverc_rsa_key")),
                                      crypto::PrivateKey::from_der(der(j, "aoverc_sign_key")),
                                      crypto::PublicKey::from_der(der(peer, "aoverc_rsa_key")),
                                      crypto::PublicKey::from_der(der(peer, "aoverc_sign_key")));
    return Identity{role == "watch" ? Role::Watch : Role::Phone, std::move(dev), std::move(pk),
                    peer.at("device_name").get<std::string>(), std::move(ring)};
  } catch (const json::exception& e) {
    throw Error(Errc::BadIdentityFile, e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::BadIdentityFile) throw;
    throw Error(Errc::BadIdentityFile, e.what());
  }
}

Identity load_identity(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::BadIdentityFile, "cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return identity_from_json(ss.str());
}

void save_identity(const std::string& path, const Identity& id) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(Errc::Io, "cannot write " + path);
  f << identity_to_json(id) << '\n';
}

}  // namespace witchstack::harness
