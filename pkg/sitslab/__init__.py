# sitslab package: object-level radar/optical SITS fusion
__version__ = "0.1.0"
