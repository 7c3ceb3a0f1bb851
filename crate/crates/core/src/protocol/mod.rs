//! Device wire formats: the scope frame stream and the wand event channel.

pub mod frame;
pub mod wand;

pub use frame::{
    decode_frame, FrameError, FrameServer, FrameSource, ScopeFrame, TcpFrameClient,
    DEVICE_FRAME_SIZE,
};
pub use wand::{
    decode_control_message, decode_wand_message, encode_control_message, encode_wand_message,
    wand_pipe, CodecError, ControlKind, ControlMessage, WandKind, WandMessage,
};
