// Live panel reducers: one object consumes the event stream and maintains
// the force trace, the scrolling spectrogram, overlay markers, and session
// state badges. Rendering reads these buffers; it never mutates them.

import { ResultOverlay } from "./overlay.js";
import { decodePcm16Base64, int16ToFloat, spectrogramDb, FRAME_LENGTH, HOP } from "./spectrogram.js";
import { ForceRingBuffer, SpectrogramColumns } from "./state.js";
import type {
  AudioChunkPayload,
  ForcePointPayload,
  StatePayload,
  StreamEvent,
} from "./types.js";

export interface GapMark {
  kind: "FRAME";
  at: number; // position in the received-frame sequence
}

export class LivePanels {
  force = new ForceRingBuffer();
  spectrogram = new SpectrogramColumns();
  overlay = new ResultOverlay();
  sessionState: StatePayload["state"] = "IDLE";
  completed = 0;
  total = 0;
  gaps: GapMark[] = [];
  frameCount = 0;
  /** carry-over PCM between chunks so STFT frames stay contiguous */
  private pcmRemainder = new Float64Array(0);

  consume(event: StreamEvent): void {
    switch (event.kind) {
      case "FORCE_POINT": {
        const p = event.payload as unknown as ForcePointPayload;
        this.force.push(p.index, p.displacement_mm, p.force_n);
        break;
      }
      case "AUDIO_CHUNK": {
        const p = event.payload as unknown as AudioChunkPayload;
        if (p.mic !== "L") break; // one scrolling panel, left microphone
        this.pushAudio(int16ToFloat(decodePcm16Base64(p.pcm16_b64)));
        break;
      }
      case "POINT_RESULT":
        this.overlay.consume(event);
        break;
      case "STATE": {
        const p = event.payload as unknown as StatePayload;
        this.sessionState = p.state;
        this.completed = p.completed;
        if (p.total !== undefined) this.total = p.total;
        break;
      }
      case "FRAME": {
        if ((event.payload as { gap?: boolean }).gap) {
          this.gaps.push({ kind: "FRAME", at: this.frameCount });
        } else {
          this.frameCount += 1;
        }
        break;
      }
    }
  }

  private pushAudio(samples: Float64Array): void {
    let joined: Float64Array;
    if (this.pcmRemainder.length) {
      joined = new Float64Array(this.pcmRemainder.length + samples.length);
      joined.set(this.pcmRemainder, 0);
      joined.set(samples, this.pcmRemainder.length);
    } else {
      joined = samples;
    }
    const nFrames = joined.length >= FRAME_LENGTH
      ? 1 + Math.floor((joined.length - FRAME_LENGTH) / HOP)
      : 0;
    if (nFrames > 0) {
      const consumable = (nFrames - 1) * HOP + FRAME_LENGTH;
      this.spectrogram.pushColumns(spectrogramDb(joined.subarray(0, consumable)));
      this.pcmRemainder = joined.slice(nFrames * HOP);
    } else {
      this.pcmRemainder = joined.slice();
    }
  }

  get paused(): boolean {
    return this.sessionState === "PAUSED";
  }
}
