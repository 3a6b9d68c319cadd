//! Password hashing, lockout on a virtual clock, and sealed provider keys.

use std::sync::Arc;

use colloquy::auth::{AuthConfig, AuthService, KeyVault, Secrets};
use colloquy::clock::{Clock, VirtualClock};
use colloquy::ids::AccountId;
use uuid::Uuid;

fn main() {
    let secrets = Secrets::parse(&"11".repeat(32), "example-hmac-secret").unwrap();
    let clock = Arc::new(VirtualClock::new(1_700_000_000_000));
    let config = AuthConfig {
        bcrypt_cost: 4,
        ..AuthConfig::default()
    };
    let auth = AuthService::new(config, &secrets, clock.clone());
    let id = auth
        .register("researcher@example.org", "a long passphrase", AccountId(Uuid::from_u128(1)))
        .unwrap();
    println!("stored hash: {}", auth.account(id).unwrap().password_hash);
    println!("stored ip:   {}", auth.hash_ip("198.51.100.4"));

    for attempt in 1..=6 {
        let r = auth.authenticate("researcher@example.org", "wrong guess", "198.51.100.4");
        println!("attempt {attempt}: {:?}", r.err());
    }
    clock.advance(15 * 60 * 1000);
    let ok = auth.authenticate("researcher@example.org", "a long passphrase", "198.51.100.4");
    println!("after 15 minutes at {}: ok={}", clock.now_ms(), ok.is_ok());

    let vault = KeyVault::new(&[7; 32]);
    let sealed = vault.seal(id, "openai", "sk-example");
    println!("sealed: {sealed:?}");
    println!("opened: {:?}", vault.open(id, "openai", &sealed));
    println!("other account: {:?}", vault.open(AccountId(Uuid::from_u128(2)), "openai", &sealed));
}
